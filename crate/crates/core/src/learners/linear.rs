//! Softmax logistic regression (full-batch gradient descent) and a linear
//! SVM trained with Pegasos, one-vs-rest.

use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{dot, LearnError, Matrix, ModelParams};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LogRegParams {
    pub l2: f64,
    pub learning_rate: f64,
    pub epochs: usize,
}

impl Default for LogRegParams {
    fn default() -> Self {
        Self { l2: 1e-4, learning_rate: 0.1, epochs: 500 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LinearSvmParams {
    pub lambda: f64,
    pub epochs: usize,
}

impl Default for LinearSvmParams {
    fn default() -> Self {
        Self { lambda: 1e-4, epochs: 20 }
    }
}

fn softmax_in_place(z: &mut [f64]) {
    let max = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in z.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    z.iter_mut().for_each(|v| *v /= sum);
}

/// Mean cross-entropy plus `l2/2 * ||W||^2` (bias unpenalized), and its gradient.
fn logreg_objective(x: &Matrix, y: &[usize], w: &[f64], b: &[f64], c: usize, l2: f64) -> (f64, Vec<f64>, Vec<f64>) {
    let d = x.cols();
    let n = x.rows() as f64;
    let mut gw = vec![0.0; c * d];
    let mut gb = vec![0.0; c];
    let mut loss = 0.0;
    let mut z = vec![0.0; c];
    for i in 0..x.rows() {
        let row = x.row(i);
        for k in 0..c {
            z[k] = dot(&w[k * d..(k + 1) * d], row) + b[k];
        }
        softmax_in_place(&mut z);
        loss -= z[y[i]].max(1e-300).ln();
        for k in 0..c {
            let g = z[k] - if k == y[i] { 1.0 } else { 0.0 };
            gb[k] += g;
            for (gj, xj) in gw[k * d..(k + 1) * d].iter_mut().zip(row) {
                *gj += g * xj;
            }
        }
    }
    loss /= n;
    gw.iter_mut().for_each(|g| *g /= n);
    gb.iter_mut().for_each(|g| *g /= n);
    for (g, wv) in gw.iter_mut().zip(w) {
        *g += l2 * wv;
    }
    loss += 0.5 * l2 * w.iter().map(|v| v * v).sum::<f64>();
    (loss, gw, gb)
}

/// Full-batch gradient descent. A step that would raise the objective is
/// retried at half the rate, so the returned loss history never increases.
pub(crate) fn fit_logreg(
    x: &Matrix,
    y: &[usize],
    c: usize,
    p: &LogRegParams,
) -> Result<(ModelParams, Vec<f64>), LearnError> {
    if !(p.learning_rate > 0.0) || p.l2 < 0.0 {
        return Err(LearnError::Hyper("logreg learning_rate must be > 0 and l2 >= 0".into()));
    }
    let d = x.cols();
    let mut w = vec![0.0; c * d];
    let mut b = vec![0.0; c];
    let mut lr = p.learning_rate;
    let (mut loss, mut gw, mut gb) = logreg_objective(x, y, &w, &b, c, p.l2);
    let mut history = vec![loss];
    for _ in 0..p.epochs {
        loop {
            let w_new: Vec<f64> = w.iter().zip(&gw).map(|(a, g)| a - lr * g).collect();
            let b_new: Vec<f64> = b.iter().zip(&gb).map(|(a, g)| a - lr * g).collect();
            let (l_new, gw_new, gb_new) = logreg_objective(x, y, &w_new, &b_new, c, p.l2);
            if l_new <= loss || lr < 1e-12 {
                if l_new <= loss {
                    w = w_new;
                    b = b_new;
                    loss = l_new;
                    gw = gw_new;
                    gb = gb_new;
                }
                break;
            }
            lr *= 0.5;
        }
        history.push(loss);
    }
    Ok((ModelParams::Linear { weights: Matrix::new(c, d, w), bias: b }, history))
}

/// Pegasos on the hinge loss for each class against the rest. The bias is
/// an extra constant input and is regularized with the weights.
pub(crate) fn fit_linear_svm(
    x: &Matrix,
    y: &[usize],
    c: usize,
    p: &LinearSvmParams,
    rng: &mut ChaCha8Rng,
) -> Result<ModelParams, LearnError> {
    if !(p.lambda > 0.0) || p.epochs == 0 {
        return Err(LearnError::Hyper("linear svm needs lambda > 0 and epochs >= 1".into()));
    }
    let d = x.cols();
    let n = x.rows();
    let mut weights = Matrix::zeros(c, d);
    let mut bias = vec![0.0; c];
    let radius = 1.0 / p.lambda.sqrt();
    let mut order: Vec<usize> = (0..n).collect();
    for class in 0..c {
        // w = scale * v keeps the shrink step O(1).
        let mut v = vec![0.0; d + 1];
        let mut scale = 1.0f64;
        let mut t = 0usize;
        for _ in 0..p.epochs {
            order.shuffle(rng);
            for &i in &order {
                t += 1;
                let eta = 1.0 / (p.lambda * t as f64);
                let target = if y[i] == class { 1.0 } else { -1.0 };
                let row = x.row(i);
                let margin = target * scale * (dot(&v[..d], row) + v[d]);
                let shrink = 1.0 - eta * p.lambda;
                if shrink <= 0.0 {
                    v.iter_mut().for_each(|a| *a = 0.0);
                    scale = 1.0;
                } else {
                    scale *= shrink;
                }
                if margin < 1.0 {
                    let step = eta * target / scale;
                    for (a, xj) in v[..d].iter_mut().zip(row) {
                        *a += step * xj;
                    }
                    v[d] += step;
                }
                let norm = scale * v.iter().map(|a| a * a).sum::<f64>().sqrt();
                if norm > radius {
                    scale *= radius / norm;
                }
                if scale < 1e-9 {
                    v.iter_mut().for_each(|a| *a *= scale);
                    scale = 1.0;
                }
            }
        }
        for (w, a) in weights.row_mut(class).iter_mut().zip(&v[..d]) {
            *w = scale * a;
        }
        bias[class] = scale * v[d];
    }
    Ok(ModelParams::Linear { weights, bias })
}
