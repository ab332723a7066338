use std::collections::BTreeMap;

use prodintent::analysis::IntentLabel;
use thiserror::Error;

use crate::Label;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum KappaError {
    #[error("kappa needs at least one item")]
    NoItems,
    #[error("kappa needs at least two raters per item (got {0})")]
    TooFewRaters(usize),
    #[error("row {row} sums to {sum}, expected {raters} ratings")]
    RowSum { row: usize, sum: usize, raters: usize },
}

/// Fleiss' kappa for an items x categories count table with `raters` ratings
/// per item. When every rating falls in one category the chance agreement is 1
/// and the result is defined as 1.
pub fn fleiss_kappa(table: &[Vec<usize>], raters: usize) -> Result<f64, KappaError> {
    if table.is_empty() {
        return Err(KappaError::NoItems);
    }
    if raters < 2 {
        return Err(KappaError::TooFewRaters(raters));
    }
    for (row, counts) in table.iter().enumerate() {
        let sum: usize = counts.iter().sum();
        if sum != raters {
            return Err(KappaError::RowSum { row, sum, raters });
        }
    }
    let n = table.len() as f64;
    let k = raters as f64;
    let categories = table.iter().map(Vec::len).max().unwrap_or(0);

    let p_bar = table
        .iter()
        .map(|row| {
            let sq: f64 = row.iter().map(|&c| (c * c) as f64).sum();
            (sq - k) / (k * (k - 1.0))
        })
        .sum::<f64>()
        / n;
    let p_e: f64 = (0..categories)
        .map(|j| {
            let col: usize = table.iter().map(|r| r.get(j).copied().unwrap_or(0)).sum();
            let p = col as f64 / (n * k);
            p * p
        })
        .sum();

    if (1.0 - p_e).abs() < 1e-15 {
        return Ok(1.0);
    }
    Ok((p_bar - p_e) / (1.0 - p_e))
}

/// Strict-majority label over non-Skip votes for each item. Ties, pluralities
/// without a majority, and all-Skip items are left out.
pub fn consensus_labels<'a, I>(votes: I) -> BTreeMap<String, IntentLabel>
where
    I: IntoIterator<Item = (&'a str, Label)>,
{
    let mut tallies: BTreeMap<&str, BTreeMap<IntentLabel, usize>> = BTreeMap::new();
    for (query_id, label) in votes {
        let entry = tallies.entry(query_id).or_default();
        if let Label::Intent(l) = label {
            *entry.entry(l).or_default() += 1;
        }
    }
    tallies
        .into_iter()
        .filter_map(|(q, counts)| {
            let total: usize = counts.values().sum();
            counts.into_iter().find(|&(_, c)| 2 * c > total).map(|(l, _)| (q.to_string(), l))
        })
        .collect()
}
