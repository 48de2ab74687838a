use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

const MAX_ITER: usize = 300;
const SHIFT_TOL: f64 = 1e-8;

/// Result of one k-means run.
#[derive(Debug, Clone, PartialEq)]
pub struct KMeansFit {
    pub centroids: Vec<Vec<f64>>,
    /// Fit-time cluster of every input point.
    pub labels: Vec<usize>,
    /// Inertia after each assignment step; non-increasing.
    pub inertia_history: Vec<f64>,
}

impl KMeansFit {
    pub fn inertia(&self) -> f64 {
        *self.inertia_history.last().expect("at least one assignment step")
    }
}

pub(crate) fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Nearest centroid with ties going to the lowest id.
pub(crate) fn nearest(centroids: &[Vec<f64>], x: &[f64]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (i, c) in centroids.iter().enumerate() {
        let d = sq_dist(c, x);
        if d < best.1 {
            best = (i, d);
        }
    }
    best
}

/// Number of distinct points, compared bitwise.
pub fn distinct_points(points: &[Vec<f64>]) -> usize {
    let mut keys: Vec<Vec<u64>> = points
        .iter()
        .map(|p| p.iter().map(|v| (v + 0.0).to_bits()).collect())
        .collect();
    keys.sort_unstable();
    keys.dedup();
    keys.len()
}

fn check_points(points: &[Vec<f64>], k: usize) -> Result<usize> {
    if k == 0 {
        return Err(Error::InvalidArgument("K must be positive".into()));
    }
    let dim = points.first().map(Vec::len).ok_or(Error::EmptyInput("k-means points"))?;
    for p in points {
        if p.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: p.len(),
            });
        }
        if p.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("non-finite k-means input".into()));
        }
    }
    let distinct = distinct_points(points);
    if distinct < k {
        return Err(Error::NotEnoughDistinctPoints {
            needed: k,
            found: distinct,
        });
    }
    Ok(dim)
}

fn plus_plus_seeds(points: &[Vec<f64>], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let n = points.len();
    let mut centroids = vec![points[rng.random_range(0..n)].clone()];
    let mut d2: Vec<f64> = points.iter().map(|p| sq_dist(p, &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let idx = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut chosen = None;
            for (i, w) in d2.iter().enumerate() {
                if *w <= 0.0 {
                    continue;
                }
                if target < *w {
                    chosen = Some(i);
                    break;
                }
                target -= w;
            }
            // Rounding can exhaust the loop; fall back to the last positive weight.
            chosen.unwrap_or_else(|| d2.iter().rposition(|w| *w > 0.0).unwrap_or(0))
        } else {
            rng.random_range(0..n)
        };
        let c = points[idx].clone();
        for (i, p) in points.iter().enumerate() {
            let d = sq_dist(p, &c);
            if d < d2[i] {
                d2[i] = d;
            }
        }
        centroids.push(c);
    }
    centroids
}

fn assign_all(points: &[Vec<f64>], centroids: &[Vec<f64>]) -> (Vec<usize>, Vec<f64>, f64) {
    let mut labels = Vec::with_capacity(points.len());
    let mut dists = Vec::with_capacity(points.len());
    let mut inertia = 0.0;
    for p in points {
        let (c, d) = nearest(centroids, p);
        labels.push(c);
        dists.push(d);
        inertia += d;
    }
    (labels, dists, inertia)
}

/// Lloyd's algorithm from k-means++ seeding.
///
/// Stops when no centroid moves more than `1e-8` or after 300 iterations. An
/// empty cluster is re-seeded at the point farthest from its centroid.
pub fn kmeans_fit(points: &[Vec<f64>], k: usize, seed: u64) -> Result<KMeansFit> {
    let dim = check_points(points, k)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids = plus_plus_seeds(points, k, &mut rng);
    let (mut labels, mut dists, inertia) = assign_all(points, &centroids);
    let mut history = vec![inertia];

    for _ in 0..MAX_ITER {
        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (p, &l) in points.iter().zip(&labels) {
            counts[l] += 1;
            for (s, v) in sums[l].iter_mut().zip(p) {
                *s += v;
            }
        }
        let mut next: Vec<Vec<f64>> = sums
            .into_iter()
            .zip(&counts)
            .zip(&centroids)
            .map(|((s, &c), old)| {
                if c == 0 {
                    old.clone()
                } else {
                    s.into_iter().map(|v| v / c as f64).collect()
                }
            })
            .collect();
        let mut taken: Vec<usize> = Vec::new();
        for (c, &cnt) in counts.iter().enumerate() {
            if cnt > 0 {
                continue;
            }
            let far = dists
                .iter()
                .enumerate()
                .filter(|(i, _)| !taken.contains(i))
                .max_by(|a, b| a.1.total_cmp(b.1).then(b.0.cmp(&a.0)))
                .map(|(i, _)| i)
                .unwrap_or(0);
            taken.push(far);
            next[c] = points[far].clone();
        }
        let shift = centroids
            .iter()
            .zip(&next)
            .map(|(a, b)| sq_dist(a, b).sqrt())
            .fold(0.0, f64::max);
        let (new_labels, new_dists, new_inertia) = assign_all(points, &next);
        let prev = *history.last().expect("non-empty");
        if new_inertia > prev {
            // Only rounding can raise inertia; keep the previous state.
            break;
        }
        centroids = next;
        labels = new_labels;
        dists = new_dists;
        history.push(new_inertia);
        if shift < SHIFT_TOL {
            break;
        }
    }
    Ok(KMeansFit {
        centroids,
        labels,
        inertia_history: history,
    })
}

/// Best of `restarts` runs by final inertia; seeds are derived from `seed`.
pub fn kmeans_best_of(points: &[Vec<f64>], k: usize, seed: u64, restarts: usize) -> Result<KMeansFit> {
    let mut best: Option<KMeansFit> = None;
    for r in 0..restarts.max(1) {
        let run_seed = seed.wrapping_add((r as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
        let fit = kmeans_fit(points, k, run_seed)?;
        if best.as_ref().is_none_or(|b| fit.inertia() < b.inertia()) {
            best = Some(fit);
        }
    }
    Ok(best.expect("at least one restart"))
}

/// Elbow rule: the K with the largest discrete second difference of the
/// inertia curve. Ties go to the smallest K.
pub fn select_k(curve: &[(usize, f64)]) -> Result<usize> {
    if curve.len() < 3 {
        return Err(Error::NotEnoughDistinctPoints {
            needed: 3,
            found: curve.len(),
        });
    }
    for w in curve.windows(2) {
        if w[1].0 != w[0].0 + 1 {
            return Err(Error::InvalidArgument(
                "inertia curve must cover consecutive K".into(),
            ));
        }
        if w[1].1 > w[0].1 {
            return Err(Error::InvalidArgument(format!(
                "inertia must be non-increasing in K, rises at K={}",
                w[1].0
            )));
        }
    }
    let mut best = (curve[1].0, f64::NEG_INFINITY);
    for w in curve.windows(3) {
        let d2 = w[0].1 - 2.0 * w[1].1 + w[2].1;
        if d2 > best.1 {
            best = (w[1].0, d2);
        }
    }
    Ok(best.0)
}
