//! CART trees (Gini) and bagged random forests.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{argmax, LearnError, Matrix, ModelParams};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ForestParams {
    pub n_trees: usize,
    /// `None` grows until leaves are pure.
    pub max_depth: Option<usize>,
    /// Features tried per split; `None` means `round(sqrt(D))`.
    pub max_features: Option<usize>,
    pub bootstrap: bool,
    pub min_samples_split: usize,
}

impl Default for ForestParams {
    fn default() -> Self {
        Self { n_trees: 100, max_depth: Some(12), max_features: None, bootstrap: true, min_samples_split: 2 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "node")]
pub enum Node {
    Leaf { class: usize },
    Split { feature: usize, threshold: f64, left: usize, right: usize },
}

/// Nodes in build order; index 0 is the root.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn predict(&self, row: &[f64]) -> usize {
        let mut at = 0;
        loop {
            match &self.nodes[at] {
                Node::Leaf { class } => return *class,
                Node::Split { feature, threshold, left, right } => {
                    at = if row[*feature] <= *threshold { *left } else { *right };
                }
            }
        }
    }
}

fn gini(counts: &[usize], total: usize) -> f64 {
    if total == 0 {
        return 0.0;
    }
    let t = total as f64;
    1.0 - counts.iter().map(|&c| (c as f64 / t).powi(2)).sum::<f64>()
}

struct Builder<'a> {
    x: &'a Matrix,
    y: &'a [usize],
    classes: usize,
    max_depth: usize,
    max_features: usize,
    min_split: usize,
    nodes: Vec<Node>,
}

impl Builder<'_> {
    fn majority(&self, idx: &[usize]) -> (usize, bool) {
        let mut counts = vec![0.0; self.classes];
        for &i in idx {
            counts[self.y[i]] += 1.0;
        }
        let best = argmax(&counts);
        (best, counts[best] as usize == idx.len())
    }

    /// Best (weighted child impurity, feature, threshold) over the sampled
    /// features; keeps scanning further features until a valid split exists.
    fn best_split(&self, idx: &[usize], rng: &mut ChaCha8Rng) -> Option<(usize, f64)> {
        let mut features: Vec<usize> = (0..self.x.cols()).collect();
        features.shuffle(rng);
        let mut best: Option<(f64, usize, f64)> = None;
        let mut sorted: Vec<(f64, usize)> = Vec::with_capacity(idx.len());
        let n = idx.len();
        for (tried, &f) in features.iter().enumerate() {
            if tried >= self.max_features && best.is_some() {
                break;
            }
            sorted.clear();
            sorted.extend(idx.iter().map(|&i| (self.x.get(i, f), self.y[i])));
            sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
            let mut left = vec![0usize; self.classes];
            let mut right = vec![0usize; self.classes];
            for &(_, c) in &sorted {
                right[c] += 1;
            }
            for pos in 0..n - 1 {
                let c = sorted[pos].1;
                left[c] += 1;
                right[c] -= 1;
                if sorted[pos].0 == sorted[pos + 1].0 {
                    continue;
                }
                let nl = pos + 1;
                let score = (nl as f64 * gini(&left, nl) + (n - nl) as f64 * gini(&right, n - nl)) / n as f64;
                if best.is_none_or(|b| score < b.0) {
                    let thr = 0.5 * (sorted[pos].0 + sorted[pos + 1].0);
                    // Midpoint can round onto the upper value for adjacent floats.
                    let thr = if thr < sorted[pos + 1].0 { thr } else { sorted[pos].0 };
                    best = Some((score, f, thr));
                }
            }
        }
        best.map(|(_, f, t)| (f, t))
    }

    fn grow(&mut self, idx: Vec<usize>, depth: usize, rng: &mut ChaCha8Rng) -> usize {
        let at = self.nodes.len();
        let (class, pure) = self.majority(&idx);
        self.nodes.push(Node::Leaf { class });
        if pure || depth >= self.max_depth || idx.len() < self.min_split {
            return at;
        }
        let Some((feature, threshold)) = self.best_split(&idx, rng) else {
            return at;
        };
        let (l, r): (Vec<usize>, Vec<usize>) = idx.iter().partition(|&&i| self.x.get(i, feature) <= threshold);
        let left = self.grow(l, depth + 1, rng);
        let right = self.grow(r, depth + 1, rng);
        self.nodes[at] = Node::Split { feature, threshold, left, right };
        at
    }
}

pub(crate) fn build_tree(
    x: &Matrix,
    y: &[usize],
    classes: usize,
    idx: Vec<usize>,
    p: &ForestParams,
    rng: &mut ChaCha8Rng,
) -> Tree {
    let d = x.cols();
    let max_features = p
        .max_features
        .unwrap_or_else(|| ((d as f64).sqrt().round() as usize).max(1))
        .clamp(1, d.max(1));
    let mut b = Builder {
        x,
        y,
        classes,
        max_depth: p.max_depth.unwrap_or(usize::MAX),
        max_features,
        min_split: p.min_samples_split.max(2),
        nodes: Vec::new(),
    };
    b.grow(idx, 0, rng);
    Tree { nodes: b.nodes }
}

pub(crate) fn fit(
    x: &Matrix,
    y: &[usize],
    classes: usize,
    p: &ForestParams,
    rng: &mut ChaCha8Rng,
) -> Result<ModelParams, LearnError> {
    if p.n_trees == 0 {
        return Err(LearnError::Hyper("forest needs n_trees >= 1".into()));
    }
    let n = x.rows();
    let seeds: Vec<u64> = (0..p.n_trees).map(|_| rng.random()).collect();
    let trees = seeds
        .into_iter()
        .map(|s| {
            let mut tree_rng = ChaCha8Rng::seed_from_u64(s);
            let idx: Vec<usize> = if p.bootstrap {
                (0..n).map(|_| tree_rng.random_range(0..n)).collect()
            } else {
                (0..n).collect()
            };
            build_tree(x, y, classes, idx, p, &mut tree_rng)
        })
        .collect();
    Ok(ModelParams::Forest { trees })
}

pub(crate) fn votes(trees: &[Tree], classes: usize, row: &[f64]) -> Vec<f64> {
    let mut counts = vec![0.0; classes];
    for t in trees {
        counts[t.predict(row)] += 1.0;
    }
    counts
}

#[cfg(test)]
mod tests {
    use super::super::fixtures::*;
    use super::super::*;
    use proptest::prelude::*;

    fn single_full_tree() -> Hyperparams {
        let mut h = Hyperparams::default();
        h.forest = ForestParams { n_trees: 1, max_depth: None, max_features: None, bootstrap: false, min_samples_split: 2 };
        h
    }

    #[test]
    fn single_unbounded_tree_fits_xor() {
        let data = xor();
        let model = train(ModelKind::RandomForest, &data, &single_full_tree(), 0).unwrap();
        assert_eq!(accuracy(&model, &data), 1.0);
    }

    proptest! {
        #[test]
        fn single_unbounded_tree_memorizes_consistent_data(
            rows in prop::collection::btree_map(prop::collection::vec(-5i32..5, 4), 0usize..3, 1..40),
            seed in 0u64..100,
        ) {
            // Map keys are distinct feature vectors, so labels are consistent.
            let feats: Vec<Vec<f64>> = rows.keys().map(|r| r.iter().map(|&v| v as f64).collect()).collect();
            let labels: Vec<usize> = rows.values().copied().collect();
            let data = Dataset::new(Matrix::from_rows(&feats, 4), labels, vec!["a".into(), "b".into(), "c".into()]).unwrap();
            let model = train(ModelKind::RandomForest, &data, &single_full_tree(), seed).unwrap();
            prop_assert_eq!(accuracy(&model, &data), 1.0);
        }
    }

    #[test]
    fn forest_separates_blobs() {
        let data = separable_blobs(20, 2);
        let model = train(ModelKind::RandomForest, &data, &Hyperparams::default(), 1).unwrap();
        assert_eq!(accuracy(&model, &data), 1.0);
    }
}
