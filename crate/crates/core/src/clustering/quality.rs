use std::collections::BTreeMap;

use crate::error::{Error, Result};

use super::kmeans::sq_dist;

fn check(points: &[Vec<f64>], labels: &[usize]) -> Result<BTreeMap<usize, Vec<usize>>> {
    if points.len() != labels.len() {
        return Err(Error::LengthMismatch {
            left: points.len(),
            right: labels.len(),
        });
    }
    let mut members: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, l) in labels.iter().enumerate() {
        members.entry(*l).or_default().push(i);
    }
    if members.len() < 2 {
        return Err(Error::UndefinedMetric(format!(
            "clustering quality needs at least 2 non-empty clusters, found {}",
            members.len()
        )));
    }
    Ok(members)
}

/// Mean silhouette coefficient under Euclidean distance. Points in singleton
/// clusters score 0.
pub fn silhouette_score(points: &[Vec<f64>], labels: &[usize]) -> Result<f64> {
    let members = check(points, labels)?;
    let mut total = 0.0;
    for (i, p) in points.iter().enumerate() {
        let own = labels[i];
        let own_members = &members[&own];
        if own_members.len() == 1 {
            continue;
        }
        let mut a = 0.0;
        for &j in own_members {
            if j != i {
                a += sq_dist(p, &points[j]).sqrt();
            }
        }
        a /= (own_members.len() - 1) as f64;
        let mut b = f64::INFINITY;
        for (c, idx) in &members {
            if *c == own {
                continue;
            }
            let mean = idx.iter().map(|&j| sq_dist(p, &points[j]).sqrt()).sum::<f64>()
                / idx.len() as f64;
            b = b.min(mean);
        }
        let denom = a.max(b);
        if denom > 0.0 {
            total += (b - a) / denom;
        }
    }
    Ok(total / points.len() as f64)
}

/// Davies-Bouldin index: mean over clusters of the worst scatter-to-separation
/// ratio. Coincident centroids make the ratio undefined.
pub fn davies_bouldin(points: &[Vec<f64>], labels: &[usize]) -> Result<f64> {
    let members = check(points, labels)?;
    let dim = points[0].len();
    let mut centroids = Vec::with_capacity(members.len());
    let mut scatter = Vec::with_capacity(members.len());
    for idx in members.values() {
        let mut c = vec![0.0; dim];
        for &j in idx {
            for (s, v) in c.iter_mut().zip(&points[j]) {
                *s += v;
            }
        }
        for s in &mut c {
            *s /= idx.len() as f64;
        }
        let s = idx.iter().map(|&j| sq_dist(&points[j], &c).sqrt()).sum::<f64>()
            / idx.len() as f64;
        centroids.push(c);
        scatter.push(s);
    }
    let k = centroids.len();
    let mut total = 0.0;
    for i in 0..k {
        let mut worst = 0.0f64;
        for j in 0..k {
            if i == j {
                continue;
            }
            let m = sq_dist(&centroids[i], &centroids[j]).sqrt();
            if m == 0.0 {
                return Err(Error::UndefinedMetric(
                    "Davies-Bouldin index with coincident centroids".into(),
                ));
            }
            worst = worst.max((scatter[i] + scatter[j]) / m);
        }
        total += worst;
    }
    Ok(total / k as f64)
}
