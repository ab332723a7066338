use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{train, Dataset, Hyperparams, LearnError, Matrix, ModelKind};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassScores {
    pub class: String,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
}

/// Metrics in percent. `confusion[gold][pred]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub accuracy: f64,
    pub macro_f1: f64,
    pub per_class: Vec<ClassScores>,
    pub confusion: Vec<Vec<usize>>,
    pub folds: usize,
    pub n: usize,
}

impl EvaluationReport {
    pub fn class(&self, name: &str) -> Option<&ClassScores> {
        self.per_class.iter().find(|c| c.class == name)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("class,precision,recall,f1,support\n");
        for c in &self.per_class {
            out.push_str(&format!("{},{:.2},{:.2},{:.2},{}\n", c.class, c.precision, c.recall, c.f1, c.support));
        }
        out.push_str(&format!("accuracy,,,{:.2},{}\n", self.accuracy, self.n));
        out.push_str(&format!("macro_f1,,,{:.2},{}\n", self.macro_f1, self.n));
        out
    }
}

fn pct(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        100.0 * num as f64 / den as f64
    }
}

/// One-vs-rest precision/recall/F1 per class and overall accuracy.
pub fn evaluate(pred: &[usize], gold: &[usize], class_names: &[String]) -> Result<EvaluationReport, LearnError> {
    if pred.len() != gold.len() {
        return Err(LearnError::EvalLengthMismatch { pred: pred.len(), gold: gold.len() });
    }
    let c = class_names.len();
    let mut confusion = vec![vec![0usize; c]; c];
    for (&p, &g) in pred.iter().zip(gold) {
        if p >= c || g >= c {
            return Err(LearnError::LabelOutOfRange { row: 0, label: p.max(g), classes: c });
        }
        confusion[g][p] += 1;
    }
    let n = gold.len();
    let correct: usize = (0..c).map(|k| confusion[k][k]).sum();
    let per_class: Vec<ClassScores> = (0..c)
        .map(|k| {
            let tp = confusion[k][k];
            let predicted: usize = (0..c).map(|g| confusion[g][k]).sum();
            let actual: usize = confusion[k].iter().sum();
            let precision = pct(tp, predicted);
            let recall = pct(tp, actual);
            let f1 = if precision + recall == 0.0 { 0.0 } else { 2.0 * precision * recall / (precision + recall) };
            ClassScores { class: class_names[k].clone(), precision, recall, f1, support: actual }
        })
        .collect();
    let macro_f1 = if c == 0 { 0.0 } else { per_class.iter().map(|s| s.f1).sum::<f64>() / c as f64 };
    Ok(EvaluationReport { accuracy: pct(correct, n), macro_f1, per_class, confusion, folds: 1, n })
}

/// Stratified fold id for every row: each class is shuffled and dealt round-robin.
pub fn stratified_folds(data: &Dataset, k: usize, seed: u64) -> Result<Vec<usize>, LearnError> {
    if k < 2 {
        return Err(LearnError::BadFoldCount(k));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut fold = vec![0usize; data.len()];
    for (class, name) in data.class_names.iter().enumerate() {
        let mut idx: Vec<usize> = (0..data.len()).filter(|&i| data.labels[i] == class).collect();
        if idx.len() < k {
            return Err(LearnError::TooFewForFolds { class: name.clone(), count: idx.len(), k });
        }
        idx.shuffle(&mut rng);
        for (pos, i) in idx.into_iter().enumerate() {
            fold[i] = pos % k;
        }
    }
    Ok(fold)
}

/// Cross-validates an arbitrary fit-and-predict routine. The closure gets the
/// training split, the held-out features, and the held-out row indices into
/// `data`, plus the fold number. Predictions are pooled over all folds.
pub fn cross_validate_with<F>(data: &Dataset, k: usize, seed: u64, fit_predict: F) -> Result<EvaluationReport, LearnError>
where
    F: Fn(&Dataset, &Matrix, &[usize], usize) -> Result<Vec<usize>, LearnError> + Sync,
{
    data.validate()?;
    let fold = stratified_folds(data, k, seed)?;
    type FoldResult = Result<(Vec<usize>, Vec<usize>), LearnError>;
    let results: Vec<FoldResult> = (0..k)
        .into_par_iter()
        .map(|f| {
            let test: Vec<usize> = (0..data.len()).filter(|&i| fold[i] == f).collect();
            let tr: Vec<usize> = (0..data.len()).filter(|&i| fold[i] != f).collect();
            let train_set = data.subset(&tr);
            let test_x = data.features.select_rows(&test);
            let pred = fit_predict(&train_set, &test_x, &test, f)?;
            if pred.len() != test.len() {
                return Err(LearnError::EvalLengthMismatch { pred: pred.len(), gold: test.len() });
            }
            Ok((pred, test.iter().map(|&i| data.labels[i]).collect()))
        })
        .collect();
    let (mut pred, mut gold) = (Vec::with_capacity(data.len()), Vec::with_capacity(data.len()));
    for r in results {
        let (p, g) = r?;
        pred.extend(p);
        gold.extend(g);
    }
    let mut report = evaluate(&pred, &gold, &data.class_names)?;
    report.folds = k;
    Ok(report)
}

/// Stratified k-fold cross-validation of one model kind.
pub fn cross_validate(
    kind: ModelKind,
    data: &Dataset,
    k: usize,
    hyper: &Hyperparams,
    seed: u64,
) -> Result<EvaluationReport, LearnError> {
    cross_validate_with(data, k, seed, |train_set, test_x, _, f| {
        let fold_seed = seed.wrapping_add(0x9E37_79B9_7F4A_7C15u64.wrapping_mul(f as u64 + 1));
        train(kind, train_set, hyper, fold_seed)?.predict(test_x)
    })
}

#[cfg(test)]
mod tests {
    use super::super::fixtures::*;
    use super::*;

    fn names(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("c{i}")).collect()
    }

    #[test]
    fn hand_confusion() {
        let r = evaluate(&[0, 1, 1, 1], &[0, 0, 1, 1], &names(2)).unwrap();
        let c1 = &r.per_class[1];
        assert!((c1.precision - 200.0 / 3.0).abs() < 1e-9);
        assert_eq!(c1.recall, 100.0);
        assert!((c1.f1 - 80.0).abs() < 1e-9);
        assert_eq!(r.accuracy, 75.0);
        assert_eq!(r.confusion, vec![vec![1, 1], vec![0, 2]]);
    }

    #[test]
    fn perfect_and_constant_predictions() {
        let gold = [0, 1, 0, 1];
        let r = evaluate(&gold, &gold, &names(2)).unwrap();
        assert_eq!(r.accuracy, 100.0);
        assert!(r.per_class.iter().all(|c| c.precision == 100.0 && c.recall == 100.0 && c.f1 == 100.0));
        let r = evaluate(&[0, 0, 0, 0], &gold, &names(2)).unwrap();
        let c1 = &r.per_class[1];
        assert_eq!((c1.precision, c1.recall, c1.f1), (0.0, 0.0, 0.0));
        assert!(evaluate(&[0], &gold, &names(2)).is_err());
    }

    fn balanced(n: usize) -> Dataset {
        let x = Matrix::new(n, 1, (0..n).map(|i| i as f64).collect());
        Dataset::new(x, (0..n).map(|i| i % 2).collect(), names(2)).unwrap()
    }

    #[test]
    fn oracle_and_constant_cross_validation() {
        let data = balanced(20);
        let oracle = cross_validate_with(&data, 5, 1, |_, _, idx, _| Ok(idx.iter().map(|&i| data.labels[i]).collect())).unwrap();
        assert_eq!(oracle.accuracy, 100.0);
        assert!(oracle.per_class.iter().all(|c| c.f1 == 100.0));
        assert_eq!(oracle.confusion.iter().flatten().sum::<usize>(), 20);
        let constant = cross_validate_with(&data, 5, 1, |_, x, _, _| Ok(vec![0; x.rows()])).unwrap();
        assert_eq!(constant.accuracy, 50.0);
        assert_eq!(constant.per_class[1].recall, 0.0);
    }

    #[test]
    fn folds_are_stratified_and_deterministic() {
        let data = balanced(23);
        let f = stratified_folds(&data, 5, 3).unwrap();
        assert_eq!(f, stratified_folds(&data, 5, 3).unwrap());
        for fold in 0..5 {
            for class in 0..2 {
                let n = (0..23).filter(|&i| f[i] == fold && data.labels[i] == class).count();
                assert!((2..=3).contains(&n));
            }
        }
    }

    #[test]
    fn too_few_examples_names_class() {
        let data = balanced(6);
        let err = stratified_folds(&data, 5, 0).unwrap_err();
        assert!(err.to_string().contains("\"c0\""), "{err}");
        assert!(matches!(stratified_folds(&data, 1, 0), Err(LearnError::BadFoldCount(1))));
    }

    #[test]
    fn linear_svm_cv_on_blobs() {
        let data = separable_blobs(20, 6);
        let r = cross_validate(ModelKind::LinearSVM, &data, 5, &Hyperparams::default(), 2).unwrap();
        assert!(r.accuracy >= 95.0, "{}", r.accuracy);
        assert_eq!(r.folds, 5);
    }
}
