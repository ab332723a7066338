use serde::{Deserialize, Serialize};

use super::{LearnError, Matrix, ModelParams};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct KnnParams {
    pub k: usize,
}

impl Default for KnnParams {
    fn default() -> Self {
        Self { k: 5 }
    }
}

pub(crate) fn fit(x: &Matrix, y: &[usize], p: &KnnParams) -> Result<ModelParams, LearnError> {
    if p.k == 0 {
        return Err(LearnError::Hyper("knn k must be >= 1".into()));
    }
    Ok(ModelParams::Knn { k: p.k, points: x.clone(), labels: y.to_vec() })
}

/// Vote counts over the k nearest stored points (Euclidean). Distance ties
/// keep the earlier stored point.
pub(crate) fn votes(k: usize, points: &Matrix, labels: &[usize], classes: usize, row: &[f64]) -> Vec<f64> {
    let mut dist: Vec<(f64, usize)> = (0..points.rows())
        .map(|i| {
            let d: f64 = points.row(i).iter().zip(row).map(|(a, b)| (a - b) * (a - b)).sum();
            (d, i)
        })
        .collect();
    let k = k.min(dist.len());
    let cmp = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
    if k < dist.len() {
        dist.select_nth_unstable_by(k - 1, cmp);
    }
    let mut counts = vec![0.0; classes];
    for &(_, i) in &dist[..k] {
        counts[labels[i]] += 1.0;
    }
    counts
}
