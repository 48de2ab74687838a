/// Weighted least-squares monotone (non-decreasing) fit by pool-adjacent-violators.
///
/// Returns one fitted value per input, in input order. `weights` defaults to 1.
pub fn pava(y: &[f64], weights: Option<&[f64]>) -> Vec<f64> {
    let n = y.len();
    if let Some(w) = weights {
        assert_eq!(w.len(), n, "pava weights length");
    }
    // Each block: (weighted sum, total weight, element count)
    let mut blocks: Vec<(f64, f64, usize)> = Vec::with_capacity(n);
    for (i, &yi) in y.iter().enumerate() {
        let wi = weights.map_or(1.0, |w| w[i]);
        blocks.push((yi * wi, wi, 1));
        while blocks.len() >= 2 {
            let (s1, w1, c1) = blocks[blocks.len() - 1];
            let (s0, w0, c0) = blocks[blocks.len() - 2];
            if s0 / w0 > s1 / w1 {
                blocks.pop();
                let last = blocks.len() - 1;
                blocks[last] = (s0 + s1, w0 + w1, c0 + c1);
            } else {
                break;
            }
        }
    }
    let mut out = Vec::with_capacity(n);
    for (s, w, c) in blocks {
        let v = s / w;
        out.extend(std::iter::repeat_n(v, c));
    }
    out
}
