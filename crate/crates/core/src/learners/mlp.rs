//! One-hidden-layer ReLU network with a softmax output, trained by
//! mini-batch SGD on cross-entropy.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{LearnError, Matrix};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MlpParams {
    pub hidden: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
}

impl Default for MlpParams {
    fn default() -> Self {
        Self { hidden: 100, learning_rate: 0.01, epochs: 200, batch_size: 32 }
    }
}

/// Parameters are one flat vector laid out as `W1 (H x D) | b1 (H) | W2 (C x H) | b2 (C)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub inputs: usize,
    pub hidden: usize,
    pub classes: usize,
    pub params: Vec<f64>,
}

impl Mlp {
    pub fn init(inputs: usize, hidden: usize, classes: usize, rng: &mut ChaCha8Rng) -> Self {
        let n = hidden * inputs + hidden + classes * hidden + classes;
        let mut params = vec![0.0; n];
        let a1 = (6.0 / inputs.max(1) as f64).sqrt();
        let a2 = (6.0 / (hidden + classes) as f64).sqrt();
        for v in &mut params[..hidden * inputs] {
            *v = rng.random_range(-a1..a1);
        }
        let w2 = hidden * inputs + hidden;
        for v in &mut params[w2..w2 + classes * hidden] {
            *v = rng.random_range(-a2..a2);
        }
        Self { inputs, hidden, classes, params }
    }

    fn offsets(&self) -> (usize, usize, usize) {
        let b1 = self.hidden * self.inputs;
        let w2 = b1 + self.hidden;
        let b2 = w2 + self.classes * self.hidden;
        (b1, w2, b2)
    }

    /// Hidden activations and output logits for one input row.
    pub fn forward(&self, row: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let (b1, w2, b2) = self.offsets();
        let p = &self.params;
        let h: Vec<f64> = (0..self.hidden)
            .map(|j| {
                let w = &p[j * self.inputs..(j + 1) * self.inputs];
                let z: f64 = w.iter().zip(row).map(|(a, b)| a * b).sum::<f64>() + p[b1 + j];
                z.max(0.0)
            })
            .collect();
        let logits = (0..self.classes)
            .map(|k| {
                let w = &p[w2 + k * self.hidden..w2 + (k + 1) * self.hidden];
                w.iter().zip(&h).map(|(a, b)| a * b).sum::<f64>() + p[b2 + k]
            })
            .collect();
        (h, logits)
    }

    /// Mean cross-entropy over `rows` and its gradient with respect to `params`.
    pub fn loss_and_gradient(&self, x: &Matrix, y: &[usize], rows: &[usize]) -> (f64, Vec<f64>) {
        let (b1, w2, b2) = self.offsets();
        let mut grad = vec![0.0; self.params.len()];
        let mut loss = 0.0;
        let scale = 1.0 / rows.len().max(1) as f64;
        for &i in rows {
            let row = x.row(i);
            let (h, mut out) = self.forward(row);
            let max = out.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let sum: f64 = out.iter().map(|v| (v - max).exp()).sum();
            loss += -(out[y[i]] - max - sum.ln());
            for (k, v) in out.iter_mut().enumerate() {
                *v = (*v - max).exp() / sum - if k == y[i] { 1.0 } else { 0.0 };
            }
            let mut dh = vec![0.0; self.hidden];
            for k in 0..self.classes {
                let g = out[k] * scale;
                grad[b2 + k] += g;
                for j in 0..self.hidden {
                    grad[w2 + k * self.hidden + j] += g * h[j];
                    dh[j] += g * self.params[w2 + k * self.hidden + j];
                }
            }
            for j in 0..self.hidden {
                if h[j] <= 0.0 {
                    continue;
                }
                grad[b1 + j] += dh[j];
                for (gv, xv) in grad[j * self.inputs..(j + 1) * self.inputs].iter_mut().zip(row) {
                    *gv += dh[j] * xv;
                }
            }
        }
        (loss * scale, grad)
    }
}

pub(crate) fn fit(x: &Matrix, y: &[usize], classes: usize, p: &MlpParams, rng: &mut ChaCha8Rng) -> Result<Mlp, LearnError> {
    if p.hidden == 0 || p.batch_size == 0 || !(p.learning_rate > 0.0) {
        return Err(LearnError::Hyper("mlp needs hidden >= 1, batch_size >= 1, learning_rate > 0".into()));
    }
    let mut net = Mlp::init(x.cols(), p.hidden, classes, rng);
    let mut order: Vec<usize> = (0..x.rows()).collect();
    for _ in 0..p.epochs {
        order.shuffle(rng);
        for batch in order.chunks(p.batch_size) {
            let (_, grad) = net.loss_and_gradient(x, y, batch);
            for (w, g) in net.params.iter_mut().zip(&grad) {
                *w -= p.learning_rate * g;
            }
        }
    }
    Ok(net)
}

#[cfg(test)]
mod tests {
    use super::super::fixtures::*;
    use super::super::*;
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn xor_is_learned_within_five_seeds() {
        let data = xor();
        let mut hyper = Hyperparams::default();
        hyper.mlp = MlpParams { hidden: 4, learning_rate: 0.1, epochs: 2000, batch_size: 4 };
        let solved = (0..5u64).any(|seed| {
            let model = train(ModelKind::MLP, &data, &hyper, seed).unwrap();
            accuracy(&model, &data) == 1.0
        });
        assert!(solved);
    }

    #[test]
    fn gradient_matches_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let x = Matrix::new(5, 3, (0..15).map(|_| rng.random_range(-2.0..2.0)).collect());
        let y = vec![0, 1, 2, 1, 0];
        let net = Mlp::init(3, 6, 3, &mut rng);
        let rows: Vec<usize> = (0..5).collect();
        let (_, analytic) = net.loss_and_gradient(&x, &y, &rows);
        let h = 1e-5;
        for p in 0..net.params.len() {
            let mut plus = net.clone();
            plus.params[p] += h;
            let mut minus = net.clone();
            minus.params[p] -= h;
            let numeric = (plus.loss_and_gradient(&x, &y, &rows).0 - minus.loss_and_gradient(&x, &y, &rows).0) / (2.0 * h);
            let denom = analytic[p].abs().max(numeric.abs());
            let rel = if denom == 0.0 { 0.0 } else { (analytic[p] - numeric).abs() / denom };
            assert!(rel < 1e-4, "param {p}: analytic {} numeric {numeric} rel {rel}", analytic[p]);
        }
    }
}
