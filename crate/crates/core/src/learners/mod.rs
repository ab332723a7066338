//! A self-contained classifier zoo with k-fold cross-validation.
//!
//! Every model standardizes its inputs with statistics fitted on the
//! training split and stores them, so `predict` accepts raw features.

mod adaboost;
mod eval;
mod forest;
mod knn;
mod linear;
mod matrix;
mod mlp;
mod rbf_svm;

pub use adaboost::{AdaBoostParams, BinaryBoost, Stump};
pub use eval::{cross_validate, cross_validate_with, evaluate, stratified_folds, ClassScores, EvaluationReport};
pub use forest::{ForestParams, Node, Tree};
pub use knn::KnnParams;
pub use linear::{LinearSvmParams, LogRegParams};
pub use matrix::{Matrix, Standardizer};
pub use mlp::{Mlp, MlpParams};
pub use rbf_svm::{RbfMachine, RbfSvmParams};

use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum LearnError {
    #[error("dataset is empty")]
    Empty,
    #[error("non-finite feature value at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },
    #[error("label {label} at row {row} is out of range for {classes} classes")]
    LabelOutOfRange { row: usize, label: usize, classes: usize },
    #[error("features have {rows} rows but {labels} labels were given")]
    LengthMismatch { rows: usize, labels: usize },
    #[error("{kind} needs at least two classes in the training data")]
    SingleClass { kind: ModelKind },
    #[error("expected D={expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("prediction and gold lengths differ ({pred} vs {gold})")]
    EvalLengthMismatch { pred: usize, gold: usize },
    #[error("class {class:?} has {count} examples, fewer than k={k} folds")]
    TooFewForFolds { class: String, count: usize, k: usize },
    #[error("k must be >= 2 (got {0})")]
    BadFoldCount(usize),
    #[error("invalid hyperparameter: {0}")]
    Hyper(String),
    #[error("unknown model kind {0:?}")]
    UnknownKind(String),
    #[error("model file: {0}")]
    Format(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ModelKind {
    LogReg,
    LinearSVM,
    RbfSVM,
    KNN,
    RandomForest,
    AdaBoost,
    MLP,
}

impl ModelKind {
    pub const ALL: [ModelKind; 7] = [
        ModelKind::LogReg,
        ModelKind::LinearSVM,
        ModelKind::RbfSVM,
        ModelKind::KNN,
        ModelKind::RandomForest,
        ModelKind::AdaBoost,
        ModelKind::MLP,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::LogReg => "LogReg",
            ModelKind::LinearSVM => "LinearSVM",
            ModelKind::RbfSVM => "RbfSVM",
            ModelKind::KNN => "KNN",
            ModelKind::RandomForest => "RandomForest",
            ModelKind::AdaBoost => "AdaBoost",
            ModelKind::MLP => "MLP",
        }
    }

    fn needs_two_classes(self) -> bool {
        matches!(self, ModelKind::LogReg | ModelKind::LinearSVM | ModelKind::RbfSVM | ModelKind::AdaBoost)
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelKind {
    type Err = LearnError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ModelKind::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| LearnError::UnknownKind(s.to_string()))
    }
}

/// Feature matrix with class labels `0..class_names.len()`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub features: Matrix,
    pub labels: Vec<usize>,
    pub class_names: Vec<String>,
}

impl Dataset {
    pub fn new(features: Matrix, labels: Vec<usize>, class_names: Vec<String>) -> Result<Self, LearnError> {
        let ds = Self { features, labels, class_names };
        ds.validate()?;
        Ok(ds)
    }

    pub fn validate(&self) -> Result<(), LearnError> {
        if self.features.rows() == 0 {
            return Err(LearnError::Empty);
        }
        if self.features.rows() != self.labels.len() {
            return Err(LearnError::LengthMismatch { rows: self.features.rows(), labels: self.labels.len() });
        }
        self.features.check_finite()?;
        let c = self.class_names.len();
        for (row, &label) in self.labels.iter().enumerate() {
            if label >= c {
                return Err(LearnError::LabelOutOfRange { row, label, classes: c });
            }
        }
        Ok(())
    }

    pub fn n_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn subset(&self, idx: &[usize]) -> Dataset {
        Dataset {
            features: self.features.select_rows(idx),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
            class_names: self.class_names.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Hyperparams {
    pub standardize: bool,
    pub logreg: LogRegParams,
    pub linear_svm: LinearSvmParams,
    pub rbf_svm: RbfSvmParams,
    pub knn: KnnParams,
    pub forest: ForestParams,
    pub adaboost: AdaBoostParams,
    pub mlp: MlpParams,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Self {
            standardize: true,
            logreg: LogRegParams::default(),
            linear_svm: LinearSvmParams::default(),
            rbf_svm: RbfSvmParams::default(),
            knn: KnnParams::default(),
            forest: ForestParams::default(),
            adaboost: AdaBoostParams::default(),
            mlp: MlpParams::default(),
        }
    }
}

/// Kind-specific learned parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type")]
pub enum ModelParams {
    /// One row of weights per class; scores are `W x + b`.
    Linear { weights: Matrix, bias: Vec<f64> },
    Rbf { gamma: f64, support_vectors: Matrix, machines: Vec<RbfMachine> },
    Knn { k: usize, points: Matrix, labels: Vec<usize> },
    Forest { trees: Vec<Tree> },
    Boost { machines: Vec<BinaryBoost> },
    Mlp(Mlp),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub version: u32,
    pub kind: ModelKind,
    pub class_names: Vec<String>,
    pub feature_dim: usize,
    pub standardizer: Option<Standardizer>,
    pub params: ModelParams,
}

/// Trains a model of `kind`. Deterministic for a given seed.
pub fn train(kind: ModelKind, data: &Dataset, hyper: &Hyperparams, seed: u64) -> Result<TrainedModel, LearnError> {
    data.validate()?;
    let c = data.n_classes();
    if kind.needs_two_classes() {
        let first = data.labels[0];
        if c < 2 || data.labels.iter().all(|&l| l == first) {
            return Err(LearnError::SingleClass { kind });
        }
    }
    let standardizer = hyper.standardize.then(|| Standardizer::fit(&data.features));
    let x = match &standardizer {
        Some(s) => s.transform(&data.features),
        None => data.features.clone(),
    };
    let y = &data.labels;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let params = match kind {
        ModelKind::LogReg => linear::fit_logreg(&x, y, c, &hyper.logreg)?.0,
        ModelKind::LinearSVM => linear::fit_linear_svm(&x, y, c, &hyper.linear_svm, &mut rng)?,
        ModelKind::RbfSVM => rbf_svm::fit(&x, y, c, &hyper.rbf_svm)?,
        ModelKind::KNN => knn::fit(&x, y, &hyper.knn)?,
        ModelKind::RandomForest => forest::fit(&x, y, c, &hyper.forest, &mut rng)?,
        ModelKind::AdaBoost => adaboost::fit(&x, y, c, &hyper.adaboost)?,
        ModelKind::MLP => ModelParams::Mlp(mlp::fit(&x, y, c, &hyper.mlp, &mut rng)?),
    };
    Ok(TrainedModel {
        version: MODEL_FORMAT_VERSION,
        kind,
        class_names: data.class_names.clone(),
        feature_dim: data.features.cols(),
        standardizer,
        params,
    })
}

/// Index of the largest score; ties go to the smallest index.
pub(crate) fn argmax(scores: &[f64]) -> usize {
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate() {
        if s > scores[best] {
            best = i;
        }
    }
    best
}

impl TrainedModel {
    pub fn n_classes(&self) -> usize {
        self.class_names.len()
    }

    /// Per-class scores for each row (higher is better).
    pub fn decision_scores(&self, features: &Matrix) -> Result<Vec<Vec<f64>>, LearnError> {
        if features.cols() != self.feature_dim {
            return Err(LearnError::DimensionMismatch { expected: self.feature_dim, got: features.cols() });
        }
        features.check_finite()?;
        let x = match &self.standardizer {
            Some(s) => s.transform(features),
            None => features.clone(),
        };
        let c = self.n_classes();
        Ok((0..x.rows())
            .map(|i| {
                let row = x.row(i);
                match &self.params {
                    ModelParams::Linear { weights, bias } => {
                        (0..weights.rows()).map(|k| dot(weights.row(k), row) + bias[k]).collect()
                    }
                    ModelParams::Rbf { gamma, support_vectors, machines } => {
                        rbf_svm::scores(*gamma, support_vectors, machines, row)
                    }
                    ModelParams::Knn { k, points, labels } => knn::votes(*k, points, labels, c, row),
                    ModelParams::Forest { trees } => forest::votes(trees, c, row),
                    ModelParams::Boost { machines } => machines.iter().map(|m| m.score(row)).collect(),
                    ModelParams::Mlp(net) => net.forward(row).1,
                }
            })
            .collect())
    }

    pub fn predict(&self, features: &Matrix) -> Result<Vec<usize>, LearnError> {
        Ok(self.decision_scores(features)?.iter().map(|s| argmax(s)).collect())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serialization is infallible")
    }

    pub fn from_json(text: &str) -> Result<Self, LearnError> {
        let model: TrainedModel = serde_json::from_str(text).map_err(|e| LearnError::Format(e.to_string()))?;
        if model.version != MODEL_FORMAT_VERSION {
            return Err(LearnError::Format(format!("unsupported version {}", model.version)));
        }
        if let Some(s) = &model.standardizer {
            if s.mean.len() != model.feature_dim || s.std.len() != model.feature_dim {
                return Err(LearnError::Format("standardizer length != feature_dim".into()));
            }
            if s.std.iter().any(|&v| !(v > 0.0)) {
                return Err(LearnError::Format("standardizer stddev must be > 0".into()));
            }
        }
        Ok(model)
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[cfg(test)]
pub(crate) mod fixtures {
    use super::*;
    use rand::Rng;

    /// Two Gaussian-free blobs: class 0 around (-2, 0), class 1 around (2, 0),
    /// every point at least 1 away from the x=0 separator.
    pub fn separable_blobs(per_class: usize, seed: u64) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut data = Vec::new();
        let mut labels = Vec::new();
        for class in 0..2 {
            let sign = if class == 0 { -1.0 } else { 1.0 };
            for _ in 0..per_class {
                data.push(sign * rng.random_range(1.0..3.0));
                data.push(rng.random_range(-2.0..2.0));
                labels.push(class);
            }
        }
        Dataset::new(Matrix::new(2 * per_class, 2, data), labels, vec!["neg".into(), "pos".into()]).unwrap()
    }

    pub fn xor() -> Dataset {
        Dataset::new(
            Matrix::new(4, 2, vec![0.0, 0.0, 1.0, 1.0, 0.0, 1.0, 1.0, 0.0]),
            vec![0, 0, 1, 1],
            vec!["a".into(), "b".into()],
        )
        .unwrap()
    }

    pub fn accuracy(model: &TrainedModel, data: &Dataset) -> f64 {
        let pred = model.predict(&data.features).unwrap();
        pred.iter().zip(&data.labels).filter(|(p, g)| p == g).count() as f64 / data.len() as f64
    }
}

#[cfg(test)]
mod tests {
    use super::fixtures::*;
    use super::*;

    #[test]
    fn xor_defeats_linear_models() {
        let data = xor();
        for kind in [ModelKind::LogReg, ModelKind::LinearSVM] {
            let model = train(kind, &data, &Hyperparams::default(), 1).unwrap();
            assert!(accuracy(&model, &data) <= 0.75, "{kind}");
        }
    }

    #[test]
    fn single_class_rejected_for_margin_models() {
        let data = Dataset::new(Matrix::new(2, 1, vec![0.0, 1.0]), vec![1, 1], vec!["a".into(), "b".into()]).unwrap();
        for kind in [ModelKind::LogReg, ModelKind::LinearSVM, ModelKind::RbfSVM, ModelKind::AdaBoost] {
            assert!(matches!(train(kind, &data, &Hyperparams::default(), 0), Err(LearnError::SingleClass { .. })));
        }
        assert!(train(ModelKind::KNN, &data, &Hyperparams::default(), 0).is_ok());
    }

    #[test]
    fn nan_features_rejected() {
        let data = Dataset {
            features: Matrix::new(2, 1, vec![0.0, f64::NAN]),
            labels: vec![0, 1],
            class_names: vec!["a".into(), "b".into()],
        };
        assert!(matches!(train(ModelKind::KNN, &data, &Hyperparams::default(), 0), Err(LearnError::NonFinite { row: 1, col: 0 })));
    }

    #[test]
    fn dimension_mismatch_message() {
        let data = separable_blobs(5, 0);
        let model = train(ModelKind::KNN, &data, &Hyperparams::default(), 0).unwrap();
        let err = model.predict(&Matrix::new(1, 3, vec![0.0; 3])).unwrap_err();
        assert_eq!(err.to_string(), "expected D=2, got 3");
    }

    #[test]
    fn fixed_linear_weights_sign() {
        let model = TrainedModel {
            version: MODEL_FORMAT_VERSION,
            kind: ModelKind::LinearSVM,
            class_names: vec!["neg".into(), "pos".into()],
            feature_dim: 2,
            standardizer: None,
            params: ModelParams::Linear {
                weights: Matrix::new(2, 2, vec![-1.0, 0.0, 1.0, 0.0]),
                bias: vec![0.0, 0.0],
            },
        };
        assert_eq!(model.predict(&Matrix::new(1, 2, vec![2.0, 0.0])).unwrap(), vec![1]);
    }

    #[test]
    fn every_kind_round_trips_and_is_pure() {
        let data = separable_blobs(10, 4);
        let mut hyper = Hyperparams::default();
        hyper.forest.n_trees = 5;
        hyper.mlp.epochs = 20;
        for kind in ModelKind::ALL {
            let model = train(kind, &data, &hyper, 3).unwrap();
            let back = TrainedModel::from_json(&model.to_json()).unwrap();
            assert_eq!(back, model, "{kind}");
            let p1 = model.predict(&data.features).unwrap();
            assert_eq!(p1, back.predict(&data.features).unwrap());
            assert_eq!(p1, model.predict(&data.features).unwrap());
            assert_eq!(model, train(kind, &data, &hyper, 3).unwrap(), "{kind} not deterministic");
        }
    }

    #[test]
    fn kind_names_parse() {
        for kind in ModelKind::ALL {
            assert_eq!(kind.name().parse::<ModelKind>().unwrap(), kind);
        }
        assert!("svm".parse::<ModelKind>().is_err());
    }
}
