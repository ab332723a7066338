//! Distant-supervision heuristics for product queries and their evaluation
//! against a gold-labeled sample.

use std::collections::BTreeSet;
use std::fmt;
use std::io::BufRead;
use std::str::FromStr;

use rand::seq::IndexedRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::log::QueryRecord;
use crate::text::{normalize_words, url_text};

const DEFAULT_CATEGORIES: &str = include_str!("../resources/categories.txt");
const DEFAULT_PRODUCTS: &str = include_str!("../resources/products.txt");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum HeuristicKind {
    ProductList,
    ProductAds,
    ProductCategories,
    AdsAndCategories,
}

impl HeuristicKind {
    pub const ALL: [HeuristicKind; 4] = [
        HeuristicKind::ProductList,
        HeuristicKind::ProductAds,
        HeuristicKind::ProductCategories,
        HeuristicKind::AdsAndCategories,
    ];

    pub fn name(self) -> &'static str {
        match self {
            HeuristicKind::ProductList => "ProductList",
            HeuristicKind::ProductAds => "ProductAds",
            HeuristicKind::ProductCategories => "ProductCategories",
            HeuristicKind::AdsAndCategories => "AdsAndCategories",
        }
    }
}

impl fmt::Display for HeuristicKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for HeuristicKind {
    type Err = SupervisionError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        HeuristicKind::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| SupervisionError::UnknownHeuristic(s.to_string()))
    }
}

#[derive(Debug, Error)]
pub enum SupervisionError {
    #[error("unknown heuristic {0:?}")]
    UnknownHeuristic(String),
    #[error("positives exhausted ({available} available, {requested} requested)")]
    PositivesExhausted { available: usize, requested: usize },
    #[error("negatives exhausted ({available} available, {requested} requested)")]
    NegativesExhausted { available: usize, requested: usize },
    #[error("gold set is empty")]
    EmptyGold,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// A resource entry pre-split into normalized tokens.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
struct Entry(Vec<String>);

/// Category names and best-seller product names used by the heuristics.
#[derive(Debug, Clone, PartialEq)]
pub struct ResourceLists {
    categories: Vec<String>,
    products: Vec<String>,
    category_tokens: Vec<Entry>,
    product_tokens: Vec<Entry>,
}

impl ResourceLists {
    /// Entries are lowercased and deduplicated; empty entries are dropped.
    pub fn new<I, J, S, T>(categories: I, products: J) -> Self
    where
        I: IntoIterator<Item = S>,
        J: IntoIterator<Item = T>,
        S: AsRef<str>,
        T: AsRef<str>,
    {
        fn clean<I: IntoIterator<Item = S>, S: AsRef<str>>(items: I) -> Vec<String> {
            let set: BTreeSet<String> = items
                .into_iter()
                .map(|s| s.as_ref().trim().to_lowercase())
                .filter(|s| !s.is_empty() && !normalize_words(s).is_empty())
                .collect();
            set.into_iter().collect()
        }
        let categories = clean(categories);
        let products = clean(products);
        let tok = |v: &[String]| v.iter().map(|s| Entry(normalize_words(s))).collect();
        Self {
            category_tokens: tok(&categories),
            product_tokens: tok(&products),
            categories,
            products,
        }
    }

    /// The bundled category list and ten best-selling products.
    pub fn bundled() -> Self {
        Self::new(parse_list(DEFAULT_CATEGORIES), parse_list(DEFAULT_PRODUCTS))
    }

    pub fn categories(&self) -> &[String] {
        &self.categories
    }

    pub fn products(&self) -> &[String] {
        &self.products
    }
}

/// One entry per line, `#` starts a comment.
pub fn parse_list(text: &str) -> Vec<String> {
    text.lines()
        .map(|l| l.split('#').next().unwrap_or("").trim())
        .filter(|l| !l.is_empty())
        .map(str::to_string)
        .collect()
}

pub fn read_list<R: BufRead>(mut reader: R) -> Result<Vec<String>, SupervisionError> {
    let mut s = String::new();
    reader.read_to_string(&mut s)?;
    Ok(parse_list(&s))
}

fn contains_run(haystack: &[String], needle: &[String]) -> bool {
    !needle.is_empty() && haystack.windows(needle.len()).any(|w| w == needle)
}

fn record_texts(record: &QueryRecord) -> impl Iterator<Item = Vec<String>> + '_ {
    std::iter::once(normalize_words(&record.query))
        .chain(record.clicks.iter().map(|c| normalize_words(&url_text(&c.url))))
}

fn matches_any(record: &QueryRecord, entries: &[Entry]) -> bool {
    record_texts(record).any(|tokens| entries.iter().any(|e| contains_run(&tokens, &e.0)))
}

pub fn apply_heuristic(record: &QueryRecord, kind: HeuristicKind, res: &ResourceLists) -> bool {
    match kind {
        HeuristicKind::ProductAds => record.ads_shown >= 1,
        HeuristicKind::ProductCategories => matches_any(record, &res.category_tokens),
        HeuristicKind::ProductList => matches_any(record, &res.product_tokens),
        HeuristicKind::AdsAndCategories => {
            apply_heuristic(record, HeuristicKind::ProductAds, res)
                || apply_heuristic(record, HeuristicKind::ProductCategories, res)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WeakLabeledSet {
    pub heuristic: HeuristicKind,
    pub seed: u64,
    pub positives: Vec<String>,
    pub negatives: Vec<String>,
}

/// Samples `n_pos` satisfying and `n_neg` non-satisfying records uniformly
/// without replacement.
pub fn build_weak_set(
    records: &[QueryRecord],
    kind: HeuristicKind,
    res: &ResourceLists,
    n_pos: usize,
    n_neg: usize,
    seed: u64,
) -> Result<WeakLabeledSet, SupervisionError> {
    let (pos, neg): (Vec<&QueryRecord>, Vec<&QueryRecord>) =
        records.iter().partition(|r| apply_heuristic(r, kind, res));
    if n_pos > pos.len() {
        return Err(SupervisionError::PositivesExhausted { available: pos.len(), requested: n_pos });
    }
    if n_neg > neg.len() {
        return Err(SupervisionError::NegativesExhausted { available: neg.len(), requested: n_neg });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let positives = pos.choose_multiple(&mut rng, n_pos).map(|r| r.query_id.clone()).collect();
    let negatives = neg.choose_multiple(&mut rng, n_neg).map(|r| r.query_id.clone()).collect();
    Ok(WeakLabeledSet { heuristic: kind, seed, positives, negatives })
}

/// Stratum sizes (satisfying, not satisfying) for a heuristic.
pub fn stratum_sizes(records: &[QueryRecord], kind: HeuristicKind, res: &ResourceLists) -> (usize, usize) {
    let pos = records.iter().filter(|r| apply_heuristic(r, kind, res)).count();
    (pos, records.len() - pos)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BinaryScores {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub tn: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub accuracy: f64,
}

impl BinaryScores {
    pub fn from_counts(tp: usize, fp: usize, fn_: usize, tn: usize) -> Self {
        let ratio = |num: usize, den: usize| if den == 0 { 0.0 } else { num as f64 / den as f64 };
        let precision = ratio(tp, tp + fp);
        let recall = ratio(tp, tp + fn_);
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        let accuracy = ratio(tp + tn, tp + fp + fn_ + tn);
        Self { tp, fp, fn_, tn, precision, recall, f1, accuracy }
    }

    pub fn total(&self) -> usize {
        self.tp + self.fp + self.fn_ + self.tn
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeuristicEvaluation {
    pub heuristic: HeuristicKind,
    pub scores: BinaryScores,
}

/// Scores each heuristic against gold product labels, product class positive.
pub fn evaluate_heuristics(
    gold: &[(QueryRecord, bool)],
    res: &ResourceLists,
) -> Result<Vec<HeuristicEvaluation>, SupervisionError> {
    if gold.is_empty() {
        return Err(SupervisionError::EmptyGold);
    }
    Ok(HeuristicKind::ALL
        .into_iter()
        .map(|kind| {
            let (mut tp, mut fp, mut fn_, mut tn) = (0, 0, 0, 0);
            for (rec, is_product) in gold {
                match (apply_heuristic(rec, kind, res), *is_product) {
                    (true, true) => tp += 1,
                    (true, false) => fp += 1,
                    (false, true) => fn_ += 1,
                    (false, false) => tn += 1,
                }
            }
            HeuristicEvaluation { heuristic: kind, scores: BinaryScores::from_counts(tp, fp, fn_, tn) }
        })
        .collect())
}
