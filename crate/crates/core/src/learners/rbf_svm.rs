//! Gaussian-kernel SVM solved with SMO (maximal violating pair selection),
//! one-vs-rest for multiclass.

use serde::{Deserialize, Serialize};

use super::{LearnError, Matrix, ModelParams};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RbfSvmParams {
    pub c: f64,
    /// Kernel width; `None` means `1 / D`.
    pub gamma: Option<f64>,
    pub tolerance: f64,
    pub max_iter: usize,
}

impl Default for RbfSvmParams {
    fn default() -> Self {
        Self { c: 1.0, gamma: None, tolerance: 1e-3, max_iter: 200_000 }
    }
}

/// One binary machine: dual coefficients `alpha_i * y_i` over the shared
/// support-vector set, and the offset `rho`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RbfMachine {
    pub coef: Vec<f64>,
    pub rho: f64,
}

fn rbf(gamma: f64, a: &[f64], b: &[f64]) -> f64 {
    let d2: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    (-gamma * d2).exp()
}

const FULL_KERNEL_LIMIT: usize = 5000;

enum Kernel<'a> {
    Full { n: usize, values: Vec<f32> },
    OnDemand { x: &'a Matrix, gamma: f64 },
}

impl<'a> Kernel<'a> {
    fn new(x: &'a Matrix, gamma: f64) -> Self {
        let n = x.rows();
        if n > FULL_KERNEL_LIMIT {
            return Kernel::OnDemand { x, gamma };
        }
        let mut values = vec![0.0f32; n * n];
        for i in 0..n {
            values[i * n + i] = 1.0;
            for j in 0..i {
                let k = rbf(gamma, x.row(i), x.row(j)) as f32;
                values[i * n + j] = k;
                values[j * n + i] = k;
            }
        }
        Kernel::Full { n, values }
    }

    fn row(&self, i: usize, buf: &mut Vec<f64>) {
        buf.clear();
        match self {
            Kernel::Full { n, values } => buf.extend(values[i * n..(i + 1) * n].iter().map(|&v| v as f64)),
            Kernel::OnDemand { x, gamma } => buf.extend((0..x.rows()).map(|j| rbf(*gamma, x.row(i), x.row(j)))),
        }
    }
}

/// Returns (alpha, rho) for labels `y` in {+1, -1}.
fn solve_binary(kernel: &Kernel, y: &[f64], c: f64, tol: f64, max_iter: usize) -> (Vec<f64>, f64) {
    let n = y.len();
    let mut alpha = vec![0.0; n];
    let mut grad = vec![-1.0; n];
    let mut ki = Vec::with_capacity(n);
    let mut kj = Vec::with_capacity(n);
    const TAU: f64 = 1e-12;
    for _ in 0..max_iter {
        let (mut i, mut gmax) = (usize::MAX, f64::NEG_INFINITY);
        let (mut j, mut gmin) = (usize::MAX, f64::INFINITY);
        for t in 0..n {
            let v = -y[t] * grad[t];
            let up = (y[t] > 0.0 && alpha[t] < c) || (y[t] < 0.0 && alpha[t] > 0.0);
            let low = (y[t] > 0.0 && alpha[t] > 0.0) || (y[t] < 0.0 && alpha[t] < c);
            if up && v > gmax {
                gmax = v;
                i = t;
            }
            if low && v < gmin {
                gmin = v;
                j = t;
            }
        }
        if i == usize::MAX || j == usize::MAX || gmax - gmin < tol {
            break;
        }
        kernel.row(i, &mut ki);
        kernel.row(j, &mut kj);
        let qij = y[i] * y[j] * ki[j];
        let (old_i, old_j) = (alpha[i], alpha[j]);
        if y[i] != y[j] {
            let quad = (ki[i] + kj[j] + 2.0 * qij).max(TAU);
            let delta = (-grad[i] - grad[j]) / quad;
            let diff = alpha[i] - alpha[j];
            alpha[i] += delta;
            alpha[j] += delta;
            if diff > 0.0 {
                if alpha[j] < 0.0 {
                    alpha[j] = 0.0;
                    alpha[i] = diff;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = -diff;
            }
            if diff > 0.0 {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = c - diff;
                }
            } else if alpha[j] > c {
                alpha[j] = c;
                alpha[i] = c + diff;
            }
        } else {
            let quad = (ki[i] + kj[j] - 2.0 * qij).max(TAU);
            let delta = (grad[i] - grad[j]) / quad;
            let sum = alpha[i] + alpha[j];
            alpha[i] -= delta;
            alpha[j] += delta;
            if sum > c {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = sum - c;
                }
            } else if alpha[j] < 0.0 {
                alpha[j] = 0.0;
                alpha[i] = sum;
            }
            if sum > c {
                if alpha[j] > c {
                    alpha[j] = c;
                    alpha[i] = sum - c;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = sum;
            }
        }
        let (di, dj) = (alpha[i] - old_i, alpha[j] - old_j);
        for t in 0..n {
            grad[t] += y[t] * (y[i] * ki[t] * di + y[j] * kj[t] * dj);
        }
    }

    let (mut ub, mut lb) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut free, mut sum_free) = (0usize, 0.0);
    for t in 0..n {
        let yg = y[t] * grad[t];
        if alpha[t] >= c {
            if y[t] < 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else if alpha[t] <= 0.0 {
            if y[t] > 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else {
            free += 1;
            sum_free += yg;
        }
    }
    let rho = if free > 0 { sum_free / free as f64 } else { (ub + lb) / 2.0 };
    (alpha, rho)
}

pub(crate) fn fit(x: &Matrix, y: &[usize], classes: usize, p: &RbfSvmParams) -> Result<ModelParams, LearnError> {
    if !(p.c > 0.0) {
        return Err(LearnError::Hyper("rbf svm C must be > 0".into()));
    }
    let gamma = p.gamma.unwrap_or(1.0 / x.cols().max(1) as f64);
    if !(gamma > 0.0) {
        return Err(LearnError::Hyper("rbf svm gamma must be > 0".into()));
    }
    let kernel = Kernel::new(x, gamma);
    let solved: Vec<(Vec<f64>, f64, Vec<f64>)> = (0..classes)
        .map(|class| {
            let yy: Vec<f64> = y.iter().map(|&l| if l == class { 1.0 } else { -1.0 }).collect();
            let (alpha, rho) = solve_binary(&kernel, &yy, p.c, p.tolerance, p.max_iter);
            (alpha, rho, yy)
        })
        .collect();
    let support: Vec<usize> = (0..x.rows()).filter(|&i| solved.iter().any(|(a, _, _)| a[i] > 0.0)).collect();
    let machines = solved
        .into_iter()
        .map(|(alpha, rho, yy)| RbfMachine { coef: support.iter().map(|&i| alpha[i] * yy[i]).collect(), rho })
        .collect();
    Ok(ModelParams::Rbf { gamma, support_vectors: x.select_rows(&support), machines })
}

pub(crate) fn scores(gamma: f64, sv: &Matrix, machines: &[RbfMachine], row: &[f64]) -> Vec<f64> {
    let k: Vec<f64> = (0..sv.rows()).map(|i| rbf(gamma, sv.row(i), row)).collect();
    machines
        .iter()
        .map(|m| m.coef.iter().zip(&k).map(|(a, b)| a * b).sum::<f64>() - m.rho)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::super::fixtures::*;
    use super::super::*;

    #[test]
    fn fits_xor_with_kernel() {
        let mut hyper = Hyperparams::default();
        hyper.rbf_svm.c = 100.0;
        hyper.rbf_svm.gamma = Some(1.0);
        let data = xor();
        let model = train(ModelKind::RbfSVM, &data, &hyper, 0).unwrap();
        assert_eq!(accuracy(&model, &data), 1.0);
    }

    #[test]
    fn separates_blobs_with_defaults() {
        let data = separable_blobs(20, 1);
        let model = train(ModelKind::RbfSVM, &data, &Hyperparams::default(), 0).unwrap();
        assert_eq!(accuracy(&model, &data), 1.0);
    }

    #[test]
    fn dual_constraints_hold() {
        let data = separable_blobs(15, 3);
        let x = Standardizer::fit(&data.features).transform(&data.features);
        let kernel = super::Kernel::new(&x, 0.5);
        let y: Vec<f64> = data.labels.iter().map(|&l| if l == 1 { 1.0 } else { -1.0 }).collect();
        let (alpha, _) = super::solve_binary(&kernel, &y, 1.0, 1e-6, 100_000);
        let balance: f64 = alpha.iter().zip(&y).map(|(a, b)| a * b).sum();
        assert!(balance.abs() < 1e-9);
        assert!(alpha.iter().all(|&a| (0.0..=1.0).contains(&a)));
    }
}
