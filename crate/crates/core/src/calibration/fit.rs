use crate::domain::Label;
use crate::error::{check_probability, Error, Result};

use super::metrics::bin_index;
use super::model::{clip, logit, CalibrationMethod, CalibrationModel};
use super::pava::pava;

/// Bin count used when fitting histogram binning.
pub const HISTOGRAM_FIT_BINS: usize = 10;

const T_LO: f64 = 0.05;
const T_HI: f64 = 20.0;
const T_TOL: f64 = 1e-4;
const NEWTON_MAX_ITER: usize = 200;
const GRAD_TOL: f64 = 1e-8;

/// Fits `method` on `(raw_score, label)` pairs.
pub fn fit_calibrator(method: CalibrationMethod, train: &[(f64, Label)]) -> Result<CalibrationModel> {
    if train.is_empty() {
        return Err(Error::EmptyInput("calibration training set"));
    }
    for (s, _) in train {
        check_probability("training score", *s)?;
    }
    let positives = train.iter().filter(|(_, l)| *l == Label::Fake).count();
    let single_class = positives == 0 || positives == train.len();
    let parametric = matches!(
        method,
        CalibrationMethod::Temperature | CalibrationMethod::Platt | CalibrationMethod::Beta
    );
    if single_class && parametric {
        return Err(Error::DegenerateFit {
            method: method.as_str(),
            reason: "training set contains a single class".into(),
        });
    }
    let model = match method {
        CalibrationMethod::Identity => CalibrationModel::Identity,
        CalibrationMethod::Temperature => fit_temperature(train),
        CalibrationMethod::Platt => fit_platt(train),
        CalibrationMethod::Beta => fit_beta(train),
        CalibrationMethod::Isotonic => fit_isotonic(train),
        CalibrationMethod::Histogram => fit_histogram(train, HISTOGRAM_FIT_BINS)?,
    };
    model.validate()?;
    Ok(model)
}

/// Log-likelihood term `-log p(y | z)` for a logistic model, computed stably.
fn nll_term(z: f64, y: f64) -> f64 {
    // softplus(z) - y*z
    let sp = if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    };
    sp - y * z
}

fn temperature_nll(logits: &[(f64, f64)], t: f64) -> f64 {
    logits.iter().map(|(z, y)| nll_term(z / t, *y)).sum()
}

fn fit_temperature(train: &[(f64, Label)]) -> CalibrationModel {
    let logits: Vec<(f64, f64)> = train.iter().map(|(s, l)| (logit(*s), l.as_f64())).collect();
    let t = golden_section(|t| temperature_nll(&logits, t), T_LO, T_HI, T_TOL);
    CalibrationModel::Temperature { t }
}

/// Golden-section minimisation of a unimodal function on `[lo, hi]`.
pub(crate) fn golden_section(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, tol: f64) -> f64 {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = hi - inv_phi * (hi - lo);
    let mut d = lo + inv_phi * (hi - lo);
    let mut fc = f(c);
    let mut fd = f(d);
    while (hi - lo).abs() > tol {
        if fc <= fd {
            hi = d;
            d = c;
            fd = fc;
            c = hi - inv_phi * (hi - lo);
            fc = f(c);
        } else {
            lo = c;
            c = d;
            fc = fd;
            d = lo + inv_phi * (hi - lo);
            fd = f(d);
        }
    }
    let mid = 0.5 * (lo + hi);
    // The bracket endpoints are never evaluated; compare against the final midpoint.
    [mid, c, d]
        .into_iter()
        .min_by(|a, b| f(*a).total_cmp(&f(*b)))
        .unwrap_or(mid)
}

/// Logistic regression NLL by damped Newton. `nonneg[i]` constrains
/// coefficient `i` to be non-negative.
struct LogisticProblem {
    rows: Vec<[f64; 3]>,
    y: Vec<f64>,
    dim: usize,
}

impl LogisticProblem {
    fn nll(&self, w: &[f64; 3]) -> f64 {
        self.rows
            .iter()
            .zip(&self.y)
            .map(|(x, y)| nll_term(dot(x, w, self.dim), *y))
            .sum::<f64>()
            / self.rows.len() as f64
    }

    fn grad_hess(&self, w: &[f64; 3]) -> ([f64; 3], [[f64; 3]; 3]) {
        let mut g = [0.0; 3];
        let mut h = [[0.0; 3]; 3];
        let n = self.rows.len() as f64;
        for (x, y) in self.rows.iter().zip(&self.y) {
            let p = super::model::sigmoid(dot(x, w, self.dim));
            let r = p - y;
            let s = p * (1.0 - p);
            for i in 0..self.dim {
                g[i] += r * x[i] / n;
                for j in 0..self.dim {
                    h[i][j] += s * x[i] * x[j] / n;
                }
            }
        }
        (g, h)
    }

    fn solve(&self, init: [f64; 3], nonneg: [bool; 3]) -> [f64; 3] {
        let mut w = init;
        let mut f = self.nll(&w);
        for _ in 0..NEWTON_MAX_ITER {
            let (g, h) = self.grad_hess(&w);
            // Coefficients pinned at the bound with an outward gradient stay fixed.
            let free: Vec<usize> = (0..self.dim)
                .filter(|&i| !(nonneg[i] && w[i] <= 0.0 && g[i] > 0.0))
                .collect();
            let gnorm = free.iter().map(|&i| g[i] * g[i]).sum::<f64>().sqrt();
            if gnorm < GRAD_TOL || free.is_empty() {
                break;
            }
            let step = newton_step(&g, &h, &free);
            let mut alpha = 1.0;
            let mut improved = false;
            for _ in 0..60 {
                let mut cand = w;
                for (k, &i) in free.iter().enumerate() {
                    cand[i] = w[i] - alpha * step[k];
                    if nonneg[i] && cand[i] < 0.0 {
                        cand[i] = 0.0;
                    }
                }
                let fc = self.nll(&cand);
                if fc.is_finite() && fc <= f {
                    improved = fc < f || cand != w;
                    w = cand;
                    f = fc;
                    break;
                }
                alpha *= 0.5;
            }
            if !improved {
                break;
            }
        }
        w
    }
}

fn dot(x: &[f64; 3], w: &[f64; 3], dim: usize) -> f64 {
    (0..dim).map(|i| x[i] * w[i]).sum()
}

/// Solves `H_ff d = g_f` over the free coordinates, with a small ridge for
/// rank-deficient designs.
fn newton_step(g: &[f64; 3], h: &[[f64; 3]; 3], free: &[usize]) -> Vec<f64> {
    let m = free.len();
    let trace: f64 = free.iter().map(|&i| h[i][i]).sum();
    let ridge = 1e-10 * trace.max(1e-12) + 1e-12;
    let mut a = vec![vec![0.0; m + 1]; m];
    for (r, &i) in free.iter().enumerate() {
        for (c, &j) in free.iter().enumerate() {
            a[r][c] = h[i][j] + if r == c { ridge } else { 0.0 };
        }
        a[r][m] = g[i];
    }
    // Gaussian elimination with partial pivoting.
    for col in 0..m {
        let piv = (col..m)
            .max_by(|&p, &q| a[p][col].abs().total_cmp(&a[q][col].abs()))
            .unwrap_or(col);
        a.swap(col, piv);
        let d = a[col][col];
        if d.abs() < 1e-300 {
            continue;
        }
        for r in 0..m {
            if r != col {
                let factor = a[r][col] / d;
                for c in col..=m {
                    a[r][c] -= factor * a[col][c];
                }
            }
        }
    }
    (0..m)
        .map(|r| {
            if a[r][r].abs() < 1e-300 {
                0.0
            } else {
                a[r][m] / a[r][r]
            }
        })
        .collect()
}

fn fit_platt(train: &[(f64, Label)]) -> CalibrationModel {
    let problem = LogisticProblem {
        rows: train.iter().map(|(s, _)| [logit(*s), 1.0, 0.0]).collect(),
        y: train.iter().map(|(_, l)| l.as_f64()).collect(),
        dim: 2,
    };
    let w = problem.solve([1.0, 0.0, 0.0], [false; 3]);
    CalibrationModel::Platt { a: w[0], b: w[1] }
}

fn fit_beta(train: &[(f64, Label)]) -> CalibrationModel {
    let problem = LogisticProblem {
        rows: train
            .iter()
            .map(|(s, _)| {
                let p = clip(*s);
                [p.ln(), -(1.0 - p).ln(), 1.0]
            })
            .collect(),
        y: train.iter().map(|(_, l)| l.as_f64()).collect(),
        dim: 3,
    };
    let w = problem.solve([1.0, 1.0, 0.0], [true, true, false]);
    CalibrationModel::Beta {
        a: w[0].max(0.0),
        b: w[1].max(0.0),
        c: w[2],
    }
}

/// Isotonic fit: ties in score are merged, PAVA runs on the weighted means, and
/// each pooled block is stored by its first and last score.
fn fit_isotonic(train: &[(f64, Label)]) -> CalibrationModel {
    let mut pts: Vec<(f64, f64)> = train.iter().map(|(s, l)| (*s, l.as_f64())).collect();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut xs: Vec<f64> = Vec::new();
    let mut sums: Vec<f64> = Vec::new();
    let mut ws: Vec<f64> = Vec::new();
    for (x, y) in pts {
        if xs.last() == Some(&x) {
            *sums.last_mut().expect("non-empty") += y;
            *ws.last_mut().expect("non-empty") += 1.0;
        } else {
            xs.push(x);
            sums.push(y);
            ws.push(1.0);
        }
    }
    let means: Vec<f64> = sums.iter().zip(&ws).map(|(s, w)| s / w).collect();
    let fitted = pava(&means, Some(&ws));
    let mut breakpoints = Vec::new();
    let mut values = Vec::new();
    let mut i = 0;
    while i < xs.len() {
        let mut j = i;
        while j + 1 < xs.len() && fitted[j + 1] == fitted[i] {
            j += 1;
        }
        breakpoints.push(xs[i]);
        values.push(fitted[i]);
        if j > i {
            breakpoints.push(xs[j]);
            values.push(fitted[i]);
        }
        i = j + 1;
    }
    CalibrationModel::Isotonic {
        breakpoints,
        values,
    }
}

/// Equal-width histogram binning. Empty bins take the value of the nearest
/// non-empty bin, preferring the lower bin on equal distance.
pub(crate) fn fit_histogram(train: &[(f64, Label)], bins: usize) -> Result<CalibrationModel> {
    if bins == 0 {
        return Err(Error::InvalidArgument("histogram bin count must be positive".into()));
    }
    let mut count = vec![0usize; bins];
    let mut pos = vec![0usize; bins];
    for (s, l) in train {
        let b = bin_index(*s, bins);
        count[b] += 1;
        if *l == Label::Fake {
            pos[b] += 1;
        }
    }
    let filled: Vec<usize> = (0..bins).filter(|&b| count[b] > 0).collect();
    let means = (0..bins)
        .map(|b| {
            let src = filled
                .iter()
                .copied()
                .min_by_key(|&f| (f.abs_diff(b), f))
                .expect("training set is non-empty");
            pos[src] as f64 / count[src] as f64
        })
        .collect();
    let edges = (0..=bins).map(|i| i as f64 / bins as f64).collect();
    Ok(CalibrationModel::Histogram { edges, means })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calibration::model::sigmoid;

    fn lab(bit: u8) -> Label {
        Label::from_bit(bit).unwrap()
    }

    /// Exactly calibrated data: at score k/20 exactly k of 20 labels are fake.
    fn calibrated_grid() -> Vec<(f64, Label)> {
        let mut out = Vec::new();
        for k in 1..20u32 {
            let s = f64::from(k) / 20.0;
            for i in 0..20u32 {
                out.push((s, if i < k { Label::Fake } else { Label::Real }));
            }
        }
        out
    }

    #[test]
    fn temperature_on_calibrated_data_is_near_one() {
        let data = calibrated_grid();
        let CalibrationModel::Temperature { t } =
            fit_calibrator(CalibrationMethod::Temperature, &data).unwrap()
        else {
            panic!("wrong model");
        };
        // grid-search oracle over [0.1, 10]
        let nll = |t: f64| -> f64 {
            data.iter()
                .map(|(s, l)| {
                    let p = sigmoid((s / (1.0 - s)).ln() / t);
                    if *l == Label::Fake {
                        -p.ln()
                    } else {
                        -(1.0 - p).ln()
                    }
                })
                .sum()
        };
        let oracle = (0..=9900)
            .map(|i| 0.1 + i as f64 * 0.001)
            .min_by(|a, b| nll(*a).total_cmp(&nll(*b)))
            .unwrap();
        assert!((oracle - 1.0).abs() < 0.05);
        assert!((t - 1.0).abs() < 0.05, "t = {t}");
        assert!((t - oracle).abs() < 2e-3);
    }

    #[test]
    fn histogram_two_bin_fixture() {
        let data = [(0.2, lab(0)), (0.3, lab(1)), (0.8, lab(1)), (0.9, lab(1))];
        let CalibrationModel::Histogram { means, edges } = fit_histogram(&data, 2).unwrap() else {
            panic!("wrong model");
        };
        assert_eq!(means, vec![0.5, 1.0]);
        assert_eq!(edges, vec![0.0, 0.5, 1.0]);
    }

    #[test]
    fn histogram_empty_bin_inherits_nearest() {
        let data = [(0.05, lab(0)), (0.95, lab(1)), (0.25, lab(1))];
        let CalibrationModel::Histogram { means, .. } = fit_histogram(&data, 10).unwrap() else {
            panic!("wrong model");
        };
        assert_eq!(means[0], 0.0);
        assert_eq!(means[1], 0.0); // equidistant from bins 0 and 2: lower wins
        assert_eq!(means[2], 1.0);
        assert_eq!(means[5], 1.0);
        assert_eq!(means[9], 1.0);
    }

    #[test]
    fn isotonic_fixture_and_ties() {
        let data = [(0.1, lab(0)), (0.2, lab(1)), (0.3, lab(0)), (0.4, lab(1))];
        let m = fit_calibrator(CalibrationMethod::Isotonic, &data).unwrap();
        let fitted: Vec<f64> = data.iter().map(|(s, _)| m.apply(*s).unwrap()).collect();
        assert_eq!(fitted, vec![0.0, 0.5, 0.5, 1.0]);
        let tied = [(0.5, lab(0)), (0.5, lab(1)), (0.6, lab(1))];
        let m = fit_calibrator(CalibrationMethod::Isotonic, &tied).unwrap();
        assert_eq!(m.apply(0.5).unwrap(), 0.5);
        assert_eq!(m.apply(0.6).unwrap(), 1.0);
    }

    #[test]
    fn single_class_rules() {
        let data = [(0.2, lab(1)), (0.7, lab(1))];
        for m in [
            CalibrationMethod::Temperature,
            CalibrationMethod::Platt,
            CalibrationMethod::Beta,
        ] {
            assert!(matches!(
                fit_calibrator(m, &data),
                Err(Error::DegenerateFit { .. })
            ));
        }
        let iso = fit_calibrator(CalibrationMethod::Isotonic, &data).unwrap();
        let hist = fit_calibrator(CalibrationMethod::Histogram, &data).unwrap();
        for s in [0.0, 0.3, 1.0] {
            assert_eq!(iso.apply(s).unwrap(), 1.0);
            assert_eq!(hist.apply(s).unwrap(), 1.0);
        }
    }

    #[test]
    fn platt_recovers_generating_parameters() {
        // Labels follow sigmoid(2*logit(s) - 0.5) exactly in expectation.
        let mut data = Vec::new();
        for k in 1..40u32 {
            let s = f64::from(k) / 40.0;
            let p = sigmoid(2.0 * logit(s) - 0.5);
            let n_pos = (p * 200.0).round() as u32;
            for i in 0..200u32 {
                data.push((s, if i < n_pos { Label::Fake } else { Label::Real }));
            }
        }
        let CalibrationModel::Platt { a, b } = fit_calibrator(CalibrationMethod::Platt, &data).unwrap()
        else {
            panic!("wrong model");
        };
        assert!((a - 2.0).abs() < 0.05, "a = {a}");
        assert!((b + 0.5).abs() < 0.05, "b = {b}");
    }

    #[test]
    fn beta_respects_non_negativity() {
        // Decreasing relationship pushes the unconstrained `a` negative.
        let data: Vec<(f64, Label)> = (1..50)
            .map(|k| {
                let s = f64::from(k) / 50.0;
                (s, if k % 3 == 0 || k < 10 { lab(1) } else { lab(0) })
            })
            .collect();
        let CalibrationModel::Beta { a, b, .. } = fit_calibrator(CalibrationMethod::Beta, &data).unwrap()
        else {
            panic!("wrong model");
        };
        assert!(a >= 0.0 && b >= 0.0);
    }

    #[test]
    fn golden_section_finds_quadratic_minimum() {
        let x = golden_section(|x| (x - 3.3).powi(2), 0.05, 20.0, 1e-6);
        assert!((x - 3.3).abs() < 1e-5);
    }
}
