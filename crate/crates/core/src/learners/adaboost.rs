//! Discrete AdaBoost over decision stumps, one-vs-rest.

use serde::{Deserialize, Serialize};

use super::{LearnError, Matrix, ModelParams};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdaBoostParams {
    pub rounds: usize,
}

impl Default for AdaBoostParams {
    fn default() -> Self {
        Self { rounds: 50 }
    }
}

/// Predicts `polarity` when `x[feature] > threshold`, else `-polarity`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stump {
    pub feature: usize,
    pub threshold: f64,
    pub polarity: f64,
    pub alpha: f64,
}

impl Stump {
    fn vote(&self, row: &[f64]) -> f64 {
        if row[self.feature] > self.threshold {
            self.polarity
        } else {
            -self.polarity
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinaryBoost {
    pub stumps: Vec<Stump>,
    /// Weighted training error of each accepted round's stump.
    pub round_errors: Vec<f64>,
}

impl BinaryBoost {
    pub fn score(&self, row: &[f64]) -> f64 {
        self.stumps.iter().map(|s| s.alpha * s.vote(row)).sum()
    }
}

const MAX_ALPHA_ERROR: f64 = 1e-10;

/// Lowest weighted-error stump. `order[f]` is the row order sorted by feature f.
fn best_stump(x: &Matrix, y: &[f64], w: &[f64], order: &[Vec<usize>]) -> (Stump, f64) {
    let total_pos: f64 = y.iter().zip(w).filter(|(l, _)| **l > 0.0).map(|(_, w)| w).sum();
    let total_neg: f64 = w.iter().sum::<f64>() - total_pos;
    // Threshold below every value: everything predicted `polarity`.
    let mut best = if total_neg <= total_pos {
        (Stump { feature: 0, threshold: f64::NEG_INFINITY, polarity: 1.0, alpha: 0.0 }, total_neg)
    } else {
        (Stump { feature: 0, threshold: f64::NEG_INFINITY, polarity: -1.0, alpha: 0.0 }, total_pos)
    };
    for (f, ord) in order.iter().enumerate() {
        let (mut left_pos, mut left_neg) = (0.0, 0.0);
        for k in 0..ord.len() {
            let i = ord[k];
            if y[i] > 0.0 {
                left_pos += w[i];
            } else {
                left_neg += w[i];
            }
            let v = x.get(i, f);
            if k + 1 < ord.len() && x.get(ord[k + 1], f) == v {
                continue;
            }
            // polarity +1: left predicted -1, right +1.
            let err_plus = left_pos + (total_neg - left_neg);
            let err_minus = left_neg + (total_pos - left_pos);
            let (err, polarity) = if err_plus <= err_minus { (err_plus, 1.0) } else { (err_minus, -1.0) };
            if err < best.1 {
                best = (Stump { feature: f, threshold: v, polarity, alpha: 0.0 }, err);
            }
        }
    }
    best
}

pub(crate) fn fit_binary(x: &Matrix, y: &[f64], rounds: usize, order: &[Vec<usize>]) -> BinaryBoost {
    let n = y.len();
    let mut w = vec![1.0 / n as f64; n];
    let mut stumps = Vec::new();
    let mut round_errors = Vec::new();
    for _ in 0..rounds {
        let (mut stump, err) = best_stump(x, y, &w, order);
        if err >= 0.5 {
            break;
        }
        let e = err.max(MAX_ALPHA_ERROR);
        stump.alpha = 0.5 * ((1.0 - e) / e).ln();
        stumps.push(stump);
        round_errors.push(err);
        if err <= 0.0 {
            break;
        }
        let mut sum = 0.0;
        for i in 0..n {
            w[i] *= (-stump.alpha * y[i] * stump.vote(x.row(i))).exp();
            sum += w[i];
        }
        w.iter_mut().for_each(|v| *v /= sum);
    }
    BinaryBoost { stumps, round_errors }
}

pub(crate) fn fit(x: &Matrix, y: &[usize], classes: usize, p: &AdaBoostParams) -> Result<ModelParams, LearnError> {
    if p.rounds == 0 {
        return Err(LearnError::Hyper("adaboost needs rounds >= 1".into()));
    }
    let order: Vec<Vec<usize>> = (0..x.cols())
        .map(|f| {
            let mut o: Vec<usize> = (0..x.rows()).collect();
            o.sort_by(|&a, &b| x.get(a, f).total_cmp(&x.get(b, f)));
            o
        })
        .collect();
    let machines = (0..classes)
        .map(|class| {
            let yy: Vec<f64> = y.iter().map(|&l| if l == class { 1.0 } else { -1.0 }).collect();
            fit_binary(x, &yy, p.rounds, &order)
        })
        .collect();
    Ok(ModelParams::Boost { machines })
}

#[cfg(test)]
mod tests {
    use super::super::fixtures::*;
    use super::super::*;

    #[test]
    fn every_round_beats_chance() {
        let data = separable_blobs(30, 5);
        let mut hyper = Hyperparams::default();
        hyper.adaboost.rounds = 50;
        let model = train(ModelKind::AdaBoost, &data, &hyper, 0).unwrap();
        let ModelParams::Boost { machines } = &model.params else { panic!() };
        for m in machines {
            assert!(!m.round_errors.is_empty());
            assert!(m.round_errors.iter().all(|&e| e < 0.5));
            assert_eq!(m.round_errors.len(), m.stumps.len());
        }
        assert_eq!(accuracy(&model, &data), 1.0);
    }

    #[test]
    fn xor_halts_without_a_useful_stump() {
        let model = train(ModelKind::AdaBoost, &xor(), &Hyperparams::default(), 0).unwrap();
        let ModelParams::Boost { machines } = &model.params else { panic!() };
        for m in machines {
            assert!(m.round_errors.iter().all(|&e| e < 0.5));
        }
    }
}
