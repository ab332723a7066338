//! Per-query intent features and their matrix layout.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::learners::Matrix;
use crate::log::QueryRecord;
use crate::text::{embed_text, extract_domain, tokenize, url_text, EmbeddingTable, Vocab, UNK};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum FeatureError {
    #[error("mixed embedding dimensions: row {row} has dim {got}, expected {expected}")]
    MixedDims { row: usize, expected: usize, got: usize },
    #[error("{ids} query ids for {rows} feature rows")]
    IdCount { ids: usize, rows: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntentFeatures {
    pub query_emb: Vec<f64>,
    pub url_emb: Vec<f64>,
    pub click_count: usize,
    /// Wordpiece tokens in the query.
    pub query_length: usize,
    pub snippet_token_count: usize,
    pub url_domain_count: usize,
    /// Share of the query's unique pieces that also occur in the clicked urls.
    pub similarity: f64,
}

/// Names of the trailing scalar columns, in matrix order.
pub const SCALAR_COLUMNS: [&str; 5] = ["click_count", "query_length", "snippet_token_count", "url_domain_count", "similarity"];

pub fn extract_features(record: &QueryRecord, table: &EmbeddingTable, vocab: &Vocab) -> IntentFeatures {
    let query_pieces = tokenize(&record.query, vocab);
    let url_pieces: Vec<String> = record.clicks.iter().flat_map(|c| tokenize(&url_text(&c.url), vocab)).collect();
    let snippet_token_count = record.clicks.iter().map(|c| tokenize(&c.snippet, vocab).len()).sum();
    let domains: BTreeSet<String> =
        record.clicks.iter().map(|c| extract_domain(&c.url)).filter(|d| !d.is_empty()).collect();

    let uq: BTreeSet<&str> = query_pieces.iter().map(String::as_str).filter(|p| *p != UNK).collect();
    let uu: BTreeSet<&str> = url_pieces.iter().map(String::as_str).filter(|p| *p != UNK).collect();
    let similarity = if uq.is_empty() || record.clicks.is_empty() {
        0.0
    } else {
        uq.intersection(&uu).count() as f64 / uq.len() as f64
    };

    IntentFeatures {
        query_emb: embed_text(&query_pieces, table),
        url_emb: embed_text(&url_pieces, table),
        click_count: record.clicks.len(),
        query_length: query_pieces.len(),
        snippet_token_count,
        url_domain_count: domains.len(),
        similarity,
    }
}

/// Product-classifier input: query embedding followed by the embedding of
/// all clicked urls (host and path).
pub fn product_features(record: &QueryRecord, table: &EmbeddingTable, vocab: &Vocab) -> Vec<f64> {
    let url_pieces: Vec<String> = record.clicks.iter().flat_map(|c| tokenize(&url_text(&c.url), vocab)).collect();
    let mut row = embed_text(&tokenize(&record.query, vocab), table);
    row.extend(embed_text(&url_pieces, table));
    row
}

/// Token sequence of one record for embedding training: query, then each
/// click's url (host and path), then each snippet.
pub fn record_pieces(record: &QueryRecord, vocab: &Vocab) -> Vec<String> {
    let mut out = tokenize(&record.query, vocab);
    for c in &record.clicks {
        out.extend(tokenize(&url_text(&c.url), vocab));
    }
    for c in &record.clicks {
        out.extend(tokenize(&c.snippet, vocab));
    }
    out
}

/// Raw texts of a record (query, url text, snippets) for vocabulary learning.
pub fn record_texts(record: &QueryRecord) -> Vec<String> {
    let mut out = vec![record.query.clone()];
    out.extend(record.clicks.iter().map(|c| url_text(&c.url)));
    out.extend(record.clicks.iter().map(|c| c.snippet.clone()));
    out
}

impl IntentFeatures {
    pub fn dim(&self) -> usize {
        self.query_emb.len()
    }

    pub fn to_row(&self) -> Vec<f64> {
        let mut row = Vec::with_capacity(2 * self.dim() + SCALAR_COLUMNS.len());
        row.extend_from_slice(&self.query_emb);
        row.extend_from_slice(&self.url_emb);
        row.extend([
            self.click_count as f64,
            self.query_length as f64,
            self.snippet_token_count as f64,
            self.url_domain_count as f64,
            self.similarity,
        ]);
        row
    }
}

/// `[query_emb | url_emb | click_count, query_length, snippet_token_count,
/// url_domain_count, similarity]`, one row per record in input order.
pub fn assemble_matrix(features: &[IntentFeatures]) -> Result<Matrix, FeatureError> {
    let dim = features.first().map_or(0, IntentFeatures::dim);
    let mut rows = Vec::with_capacity(features.len());
    for (i, f) in features.iter().enumerate() {
        for got in [f.query_emb.len(), f.url_emb.len()] {
            if got != dim {
                return Err(FeatureError::MixedDims { row: i, expected: dim, got });
            }
        }
        rows.push(f.to_row());
    }
    Ok(Matrix::from_rows(&rows, 2 * dim + SCALAR_COLUMNS.len()))
}

pub fn column_names(dim: usize) -> Vec<String> {
    (0..dim)
        .map(|i| format!("q{i}"))
        .chain((0..dim).map(|i| format!("u{i}")))
        .chain(SCALAR_COLUMNS.iter().map(|s| s.to_string()))
        .collect()
}

/// CSV with a `query_id` column followed by every matrix column.
pub fn features_csv(query_ids: &[String], features: &[IntentFeatures]) -> Result<String, FeatureError> {
    if query_ids.len() != features.len() {
        return Err(FeatureError::IdCount { ids: query_ids.len(), rows: features.len() });
    }
    let m = assemble_matrix(features)?;
    let dim = features.first().map_or(0, IntentFeatures::dim);
    let mut out = String::from("query_id,");
    out.push_str(&column_names(dim).join(","));
    out.push('\n');
    for (i, id) in query_ids.iter().enumerate() {
        out.push_str(id);
        for v in m.row(i) {
            out.push(',');
            out.push_str(&v.to_string());
        }
        out.push('\n');
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::log::ClickEvent;
    use chrono::{TimeZone, Utc};
    use proptest::prelude::*;

    fn record(query: &str, urls: &[(&str, &str)]) -> QueryRecord {
        QueryRecord {
            query_id: "q".into(),
            session_id: "s".into(),
            timestamp: Utc.with_ymd_and_hms(2024, 5, 1, 12, 0, 0).unwrap(),
            query: query.into(),
            ads_shown: 0,
            clicks: urls
                .iter()
                .enumerate()
                .map(|(i, (u, s))| ClickEvent { url: (*u).into(), snippet: (*s).into(), dwell_seconds: 5.0, order: i as u32 + 1 })
                .collect(),
        }
    }

    fn vocab() -> Vocab {
        Vocab::from_pieces(["a", "b", "c", "d", "shop", "com", "news", "org", "x"]).unwrap()
    }

    fn table() -> EmbeddingTable {
        let mut t = EmbeddingTable::new(2);
        t.insert("a", vec![1.0, 0.0]).unwrap();
        t.insert("b", vec![0.0, 1.0]).unwrap();
        t.insert("shop", vec![2.0, 2.0]).unwrap();
        t
    }

    #[test]
    fn counts_clicks_and_domains() {
        let r = record("a b", &[("shop.com/a", "a b c"), ("www.shop.com/b", ""), ("news.org/c", "d")]);
        let f = extract_features(&r, &table(), &vocab());
        assert_eq!(f.click_count, 3);
        assert_eq!(f.url_domain_count, 2);
        assert_eq!(f.query_length, 2);
        assert_eq!(f.snippet_token_count, 4);
        assert_eq!(f.similarity, 1.0);
        assert_eq!(f.query_emb, vec![0.5, 0.5]);
    }

    #[test]
    fn zero_clicks_are_degenerate() {
        let f = extract_features(&record("a", &[]), &table(), &vocab());
        assert_eq!((f.click_count, f.snippet_token_count, f.url_domain_count), (0, 0, 0));
        assert_eq!(f.similarity, 0.0);
        assert_eq!(f.url_emb, vec![0.0, 0.0]);
    }

    #[test]
    fn similarity_is_query_containment() {
        let f = extract_features(&record("a b", &[("a.org/c/d", "")]), &table(), &vocab());
        // U_q = {a, b}; U_u = {a, org, c, d}.
        assert_eq!(f.similarity, 0.5);
    }

    #[test]
    fn layout_is_documented_order() {
        let f = IntentFeatures {
            query_emb: vec![1.0, 2.0],
            url_emb: vec![3.0, 4.0],
            click_count: 5,
            query_length: 6,
            snippet_token_count: 7,
            url_domain_count: 8,
            similarity: 0.9,
        };
        let m = assemble_matrix(std::slice::from_ref(&f)).unwrap();
        assert_eq!((m.rows(), m.cols()), (1, 9));
        assert_eq!(m.row(0), &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 0.9]);
        let mut g = f.clone();
        g.click_count = 1;
        let m = assemble_matrix(&[f.clone(), g]).unwrap();
        assert_eq!(m.get(1, 4), 1.0);
        assert_eq!(assemble_matrix(&[]).unwrap().rows(), 0);
        let mut bad = f.clone();
        bad.url_emb.push(0.0);
        assert_eq!(assemble_matrix(&[f, bad]).unwrap_err(), FeatureError::MixedDims { row: 1, expected: 2, got: 3 });
        assert_eq!(column_names(1), ["q0", "u0", "click_count", "query_length", "snippet_token_count", "url_domain_count", "similarity"]);
    }

    #[test]
    fn csv_has_header_and_rows() {
        let f = extract_features(&record("a", &[]), &table(), &vocab());
        let csv = features_csv(&["q1".into()], &[f]).unwrap();
        let mut lines = csv.lines();
        assert_eq!(lines.next().unwrap(), "query_id,q0,q1,u0,u1,click_count,query_length,snippet_token_count,url_domain_count,similarity");
        assert_eq!(lines.next().unwrap(), "q1,1,0,0,0,0,1,0,0,0");
    }

    proptest! {
        #[test]
        fn similarity_bounded_and_pure(q in "[a-d ]{0,12}", u in "[a-d/]{0,12}", n in 0usize..3) {
            let urls: Vec<(String, &str)> = (0..n).map(|i| (format!("shop.com/{u}{i}"), "a")).collect();
            let refs: Vec<(&str, &str)> = urls.iter().map(|(a, b)| (a.as_str(), *b)).collect();
            let r = record(&q, &refs);
            let f = extract_features(&r, &table(), &vocab());
            prop_assert!((0.0..=1.0).contains(&f.similarity));
            prop_assert!(f.url_domain_count <= f.click_count);
            prop_assert_eq!(f, extract_features(&r, &table(), &vocab()));
        }
    }
}
