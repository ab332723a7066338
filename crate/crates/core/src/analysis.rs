//! Session-level intent metrics: success rate, popularity, effort and intent
//! co-occurrence.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::log::{build_sessions, QueryRecord, Session};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum IntentLabel {
    Comparison,
    Informational,
    Navigational,
    Support,
    Transactional,
    NotProduct,
}

pub const PRODUCT_INTENTS: [IntentLabel; 5] = [
    IntentLabel::Comparison,
    IntentLabel::Informational,
    IntentLabel::Navigational,
    IntentLabel::Support,
    IntentLabel::Transactional,
];

pub const ALL_INTENTS: [IntentLabel; 6] = [
    IntentLabel::Comparison,
    IntentLabel::Informational,
    IntentLabel::Navigational,
    IntentLabel::Support,
    IntentLabel::Transactional,
    IntentLabel::NotProduct,
];

impl IntentLabel {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Comparison => "Comparison",
            Self::Informational => "Informational",
            Self::Navigational => "Navigational",
            Self::Support => "Support",
            Self::Transactional => "Transactional",
            Self::NotProduct => "NotProduct",
        }
    }

    pub fn is_product(self) -> bool {
        self != Self::NotProduct
    }

    /// Position in [`PRODUCT_INTENTS`], `None` for `NotProduct`.
    pub fn product_index(self) -> Option<usize> {
        PRODUCT_INTENTS.iter().position(|&l| l == self)
    }
}

impl fmt::Display for IntentLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("unknown intent label {0:?}")]
pub struct UnknownLabel(pub String);

impl FromStr for IntentLabel {
    type Err = UnknownLabel;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ALL_INTENTS.iter().copied().find(|l| l.as_str() == s).ok_or_else(|| UnknownLabel(s.to_string()))
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum AnalysisError {
    #[error("no product-intent labels")]
    NoProductLabels,
    #[error("no comparison baseline")]
    NoComparisonBaseline,
}

/// Percent of records per intent whose last click dwelt more than 30 s.
/// Intents without records are absent; zero-click records count as failures.
pub fn success_rate(items: &[(&QueryRecord, IntentLabel)]) -> BTreeMap<IntentLabel, f64> {
    let mut tally: BTreeMap<IntentLabel, (usize, usize)> = BTreeMap::new();
    for (r, l) in items.iter().filter(|(_, l)| l.is_product()) {
        let e = tally.entry(*l).or_default();
        e.1 += 1;
        if r.last_click().is_some_and(|c| c.dwell_seconds > 30.0) {
            e.0 += 1;
        }
    }
    tally.into_iter().map(|(l, (ok, n))| (l, 100.0 * ok as f64 / n as f64)).collect()
}

pub fn popularity(labels: &[IntentLabel]) -> Result<BTreeMap<IntentLabel, f64>, AnalysisError> {
    let mut counts: BTreeMap<IntentLabel, usize> = BTreeMap::new();
    for &l in labels.iter().filter(|l| l.is_product()) {
        *counts.entry(l).or_default() += 1;
    }
    let total: usize = counts.values().sum();
    if total == 0 {
        return Err(AnalysisError::NoProductLabels);
    }
    Ok(counts.into_iter().map(|(l, c)| (l, 100.0 * c as f64 / total as f64)).collect())
}

/// Mean total dwell per intent relative to the Comparison mean.
pub fn effort(items: &[(&QueryRecord, IntentLabel)]) -> Result<BTreeMap<IntentLabel, f64>, AnalysisError> {
    let mut sums: BTreeMap<IntentLabel, (f64, usize)> = BTreeMap::new();
    for (r, l) in items.iter().filter(|(_, l)| l.is_product()) {
        let e = sums.entry(*l).or_default();
        e.0 += r.total_dwell();
        e.1 += 1;
    }
    let means: BTreeMap<IntentLabel, f64> = sums.into_iter().map(|(l, (s, n))| (l, s / n as f64)).collect();
    let base = match means.get(&IntentLabel::Comparison) {
        Some(&m) if m > 0.0 => m,
        _ => return Err(AnalysisError::NoComparisonBaseline),
    };
    Ok(means.into_iter().map(|(l, m)| (l, m / base)).collect())
}

/// Co-occurrence percentages indexed `[current][preceding]` over
/// [`PRODUCT_INTENTS`]. A query counts for `(A, B)` when some earlier query in
/// its session has intent B. Unlabeled and NotProduct queries are ignored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cooccurrence {
    pub percent: Vec<Vec<f64>>,
    pub hits: Vec<Vec<usize>>,
    pub subjects: Vec<usize>,
}

pub fn cooccurrence(sessions: &[Session], labels: &BTreeMap<String, IntentLabel>) -> Cooccurrence {
    let n = PRODUCT_INTENTS.len();
    let mut hits = vec![vec![0usize; n]; n];
    let mut subjects = vec![0usize; n];
    for s in sessions {
        let mut seen = vec![false; n];
        for r in &s.records {
            let Some(a) = labels.get(&r.query_id).and_then(|l| l.product_index()) else {
                continue;
            };
            subjects[a] += 1;
            for (b, &present) in seen.iter().enumerate() {
                if present {
                    hits[a][b] += 1;
                }
            }
            seen[a] = true;
        }
    }
    let percent = hits
        .iter()
        .zip(&subjects)
        .map(|(row, &s)| row.iter().map(|&h| if s == 0 { 0.0 } else { 100.0 * h as f64 / s as f64 }).collect())
        .collect();
    Cooccurrence { percent, hits, subjects }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub counts: BTreeMap<IntentLabel, usize>,
    pub success_rate: BTreeMap<IntentLabel, f64>,
    pub popularity: BTreeMap<IntentLabel, f64>,
    pub effort: BTreeMap<IntentLabel, f64>,
    pub intents: Vec<IntentLabel>,
    pub cooccurrence: Cooccurrence,
}

/// All metrics over the labeled subset of `records`.
pub fn analyze(records: &[QueryRecord], labels: &BTreeMap<String, IntentLabel>) -> Result<MetricsReport, AnalysisError> {
    let items: Vec<(&QueryRecord, IntentLabel)> =
        records.iter().filter_map(|r| labels.get(&r.query_id).map(|&l| (r, l))).collect();
    let mut counts = BTreeMap::new();
    for (_, l) in &items {
        *counts.entry(*l).or_default() += 1;
    }
    let only: Vec<IntentLabel> = items.iter().map(|(_, l)| *l).collect();
    Ok(MetricsReport {
        counts,
        success_rate: success_rate(&items),
        popularity: popularity(&only)?,
        effort: effort(&items)?,
        intents: PRODUCT_INTENTS.to_vec(),
        cooccurrence: cooccurrence(&build_sessions(records), labels),
    })
}

impl MetricsReport {
    /// Per-intent table followed by the co-occurrence matrix.
    pub fn to_csv(&self) -> String {
        let cell = |m: &BTreeMap<IntentLabel, f64>, l: IntentLabel| m.get(&l).map_or(String::new(), |v| format!("{v:.2}"));
        let mut out = String::from("Intent,Count,Success Rate,Popularity,Estimated Effort\n");
        for l in PRODUCT_INTENTS {
            out.push_str(&format!(
                "{l},{},{},{},{}\n",
                self.counts.get(&l).copied().unwrap_or(0),
                cell(&self.success_rate, l),
                cell(&self.popularity, l),
                cell(&self.effort, l)
            ));
        }
        out.push_str("\nCurrent \\ Preceding");
        for l in PRODUCT_INTENTS {
            out.push_str(&format!(",{l}"));
        }
        out.push('\n');
        for (l, row) in PRODUCT_INTENTS.iter().zip(&self.cooccurrence.percent) {
            out.push_str(l.as_str());
            for v in row {
                out.push_str(&format!(",{v:.2}"));
            }
            out.push('\n');
        }
        out
    }
}
