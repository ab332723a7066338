//! LDA by collapsed Gibbs sampling over wordpiece documents, and per-topic
//! sampling of queries for annotation.

use std::collections::BTreeMap;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;
use thiserror::Error;

use crate::log::QueryRecord;
use crate::text::{tokenize, url_path_text, Vocab, UNK};

#[derive(Debug, Error, PartialEq)]
pub enum TopicError {
    #[error("all documents are empty")]
    AllEmpty,
    #[error("topic count must be at least 1")]
    NoTopics,
    #[error("alpha and beta must be positive (got alpha={alpha}, beta={beta})")]
    BadPrior { alpha: f64, beta: f64 },
    #[error("token id {id} in document {doc} is outside the vocabulary of {vocab_size}")]
    TokenOutOfRange { doc: usize, id: u32, vocab_size: usize },
    #[error("invariant violated: {0}")]
    Invariant(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TopicDocument {
    pub query_id: String,
    pub token_ids: Vec<u32>,
}

/// Query pieces, then each click's url path, then each snippet. Hosts are
/// left out so clusters do not form around domain names. `[UNK]` is dropped.
pub fn build_doc(record: &QueryRecord, vocab: &Vocab) -> TopicDocument {
    let mut texts = vec![record.query.clone()];
    texts.extend(record.clicks.iter().map(|c| url_path_text(&c.url)));
    texts.extend(record.clicks.iter().map(|c| c.snippet.clone()));
    let token_ids = texts
        .iter()
        .flat_map(|t| tokenize(t, vocab))
        .filter(|p| p != UNK)
        .filter_map(|p| vocab.id(&p))
        .collect();
    TopicDocument { query_id: record.query_id.clone(), token_ids }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LdaConfig {
    pub topics: usize,
    /// `None` means `50 / topics`.
    pub alpha: Option<f64>,
    pub beta: f64,
    pub iterations: usize,
    /// Sweeps between log-likelihood evaluations.
    pub likelihood_every: usize,
}

impl Default for LdaConfig {
    fn default() -> Self {
        Self { topics: 50, alpha: None, beta: 0.01, iterations: 500, likelihood_every: 20 }
    }
}

impl LdaConfig {
    pub fn alpha(&self) -> f64 {
        self.alpha.unwrap_or(50.0 / self.topics.max(1) as f64)
    }
}

/// Gibbs sampler state. Counts are kept in sync with `assignments`.
#[derive(Debug, Clone)]
pub struct LdaSampler {
    k: usize,
    v: usize,
    alpha: f64,
    beta: f64,
    docs: Vec<Vec<u32>>,
    assignments: Vec<Vec<u32>>,
    /// Row-major K x V.
    topic_word: Vec<u32>,
    topic_totals: Vec<u32>,
    /// Row-major D x K.
    doc_topic: Vec<u32>,
    rng: ChaCha8Rng,
    probs: Vec<f64>,
}

impl LdaSampler {
    pub fn new(docs: &[TopicDocument], vocab_size: usize, k: usize, alpha: f64, beta: f64, seed: u64) -> Result<Self, TopicError> {
        if k == 0 {
            return Err(TopicError::NoTopics);
        }
        if !(alpha > 0.0 && beta > 0.0) {
            return Err(TopicError::BadPrior { alpha, beta });
        }
        if docs.iter().all(|d| d.token_ids.is_empty()) {
            return Err(TopicError::AllEmpty);
        }
        for (d, doc) in docs.iter().enumerate() {
            if let Some(&id) = doc.token_ids.iter().find(|&&id| id as usize >= vocab_size) {
                return Err(TopicError::TokenOutOfRange { doc: d, id, vocab_size });
            }
        }
        let mut s = Self {
            k,
            v: vocab_size,
            alpha,
            beta,
            docs: docs.iter().map(|d| d.token_ids.clone()).collect(),
            assignments: Vec::with_capacity(docs.len()),
            topic_word: vec![0; k * vocab_size],
            topic_totals: vec![0; k],
            doc_topic: vec![0; docs.len() * k],
            rng: ChaCha8Rng::seed_from_u64(seed),
            probs: vec![0.0; k],
        };
        for d in 0..s.docs.len() {
            let mut z = Vec::with_capacity(s.docs[d].len());
            for i in 0..s.docs[d].len() {
                let t = s.rng.random_range(0..k) as u32;
                s.add(d, s.docs[d][i], t);
                z.push(t);
            }
            s.assignments.push(z);
        }
        Ok(s)
    }

    fn add(&mut self, d: usize, w: u32, t: u32) {
        let t = t as usize;
        self.topic_word[t * self.v + w as usize] += 1;
        self.topic_totals[t] += 1;
        self.doc_topic[d * self.k + t] += 1;
    }

    fn remove(&mut self, d: usize, w: u32, t: u32) {
        let t = t as usize;
        self.topic_word[t * self.v + w as usize] -= 1;
        self.topic_totals[t] -= 1;
        self.doc_topic[d * self.k + t] -= 1;
    }

    /// One full pass resampling every token's topic.
    pub fn sweep(&mut self) {
        let vbeta = self.v as f64 * self.beta;
        for d in 0..self.docs.len() {
            for i in 0..self.docs[d].len() {
                let w = self.docs[d][i];
                let old = self.assignments[d][i];
                self.remove(d, w, old);
                let mut total = 0.0;
                for t in 0..self.k {
                    let p = (self.doc_topic[d * self.k + t] as f64 + self.alpha)
                        * (self.topic_word[t * self.v + w as usize] as f64 + self.beta)
                        / (self.topic_totals[t] as f64 + vbeta);
                    total += p;
                    self.probs[t] = total;
                }
                let u = self.rng.random::<f64>() * total;
                let new = self.probs.iter().position(|&c| u < c).unwrap_or(self.k - 1) as u32;
                self.add(d, w, new);
                self.assignments[d][i] = new;
            }
        }
    }

    /// Joint log p(w, z) with theta and phi integrated out.
    pub fn log_likelihood(&self) -> f64 {
        let (k, v) = (self.k as f64, self.v as f64);
        let lg_beta = ln_gamma(self.beta);
        let mut ll = k * (ln_gamma(v * self.beta) - v * lg_beta);
        for t in 0..self.k {
            let row = &self.topic_word[t * self.v..(t + 1) * self.v];
            let mut zeros = 0usize;
            for &c in row {
                if c == 0 {
                    zeros += 1;
                } else {
                    ll += ln_gamma(c as f64 + self.beta);
                }
            }
            ll += zeros as f64 * lg_beta - ln_gamma(self.topic_totals[t] as f64 + v * self.beta);
        }
        let lg_alpha = ln_gamma(self.alpha);
        for d in 0..self.docs.len() {
            ll += ln_gamma(k * self.alpha) - k * lg_alpha;
            for t in 0..self.k {
                ll += ln_gamma(self.doc_topic[d * self.k + t] as f64 + self.alpha);
            }
            ll -= ln_gamma(self.docs[d].len() as f64 + k * self.alpha);
        }
        ll
    }

    /// Recounts everything from the assignments and compares with the
    /// incrementally maintained tables.
    pub fn check_invariants(&self) -> Result<(), TopicError> {
        let mut tw = vec![0u32; self.topic_word.len()];
        let mut dt = vec![0u32; self.doc_topic.len()];
        for (d, z) in self.assignments.iter().enumerate() {
            if z.len() != self.docs[d].len() {
                return Err(TopicError::Invariant(format!("doc {d} has {} assignments for {} tokens", z.len(), self.docs[d].len())));
            }
            for (&t, &w) in z.iter().zip(&self.docs[d]) {
                if t as usize >= self.k {
                    return Err(TopicError::Invariant(format!("assignment {t} >= K={}", self.k)));
                }
                tw[t as usize * self.v + w as usize] += 1;
                dt[d * self.k + t as usize] += 1;
            }
            let row: u32 = self.doc_topic[d * self.k..(d + 1) * self.k].iter().sum();
            if row as usize != self.docs[d].len() {
                return Err(TopicError::Invariant(format!("doc {d} row sum {row} != length {}", self.docs[d].len())));
            }
        }
        if tw != self.topic_word {
            return Err(TopicError::Invariant("topic-word counts disagree with assignments".into()));
        }
        if dt != self.doc_topic {
            return Err(TopicError::Invariant("doc-topic counts disagree with assignments".into()));
        }
        let tokens: usize = self.docs.iter().map(Vec::len).sum();
        for t in 0..self.k {
            let row: u32 = self.topic_word[t * self.v..(t + 1) * self.v].iter().sum();
            if row != self.topic_totals[t] {
                return Err(TopicError::Invariant(format!("topic {t} total {} != row sum {row}", self.topic_totals[t])));
            }
        }
        let total: u64 = self.topic_totals.iter().map(|&c| c as u64).sum();
        if total as usize != tokens {
            return Err(TopicError::Invariant(format!("topic totals {total} != corpus tokens {tokens}")));
        }
        Ok(())
    }

    pub fn assignments(&self) -> &[Vec<u32>] {
        &self.assignments
    }

    pub fn into_model(self, query_ids: Vec<String>, likelihoods: Vec<(usize, f64)>) -> TopicModel {
        TopicModel {
            k: self.k,
            alpha: self.alpha,
            beta: self.beta,
            vocab_size: self.v,
            query_ids,
            topic_word_counts: self.topic_word,
            topic_totals: self.topic_totals,
            doc_topic_counts: self.doc_topic,
            assignments: self.assignments,
            log_likelihoods: likelihoods,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopicModel {
    pub k: usize,
    pub alpha: f64,
    pub beta: f64,
    pub vocab_size: usize,
    pub query_ids: Vec<String>,
    /// Row-major K x V.
    pub topic_word_counts: Vec<u32>,
    pub topic_totals: Vec<u32>,
    /// Row-major D x K.
    pub doc_topic_counts: Vec<u32>,
    pub assignments: Vec<Vec<u32>>,
    /// `(sweep, log-likelihood)`, sweep 0 being the random initialization.
    pub log_likelihoods: Vec<(usize, f64)>,
}

impl TopicModel {
    pub fn n_docs(&self) -> usize {
        self.assignments.len()
    }

    pub fn doc_row(&self, d: usize) -> &[u32] {
        &self.doc_topic_counts[d * self.k..(d + 1) * self.k]
    }

    pub fn topic_row(&self, t: usize) -> &[u32] {
        &self.topic_word_counts[t * self.vocab_size..(t + 1) * self.vocab_size]
    }

    /// Highest-count word ids for a topic, ties broken by smaller id.
    pub fn top_words(&self, t: usize, n: usize) -> Vec<(u32, u32)> {
        let mut words: Vec<(u32, u32)> =
            self.topic_row(t).iter().enumerate().filter(|(_, &c)| c > 0).map(|(w, &c)| (w as u32, c)).collect();
        words.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
        words.truncate(n);
        words
    }

    /// Hard cluster membership: topic → query ids in document order.
    pub fn memberships(&self) -> BTreeMap<usize, Vec<String>> {
        let mut out: BTreeMap<usize, Vec<String>> = BTreeMap::new();
        for d in 0..self.n_docs() {
            out.entry(dominant_topic(self.doc_row(d))).or_default().push(self.query_ids[d].clone());
        }
        out
    }

    pub fn membership_tsv(&self) -> String {
        let mut out = String::new();
        for d in 0..self.n_docs() {
            out.push_str(&format!("{}\t{}\n", self.query_ids[d], dominant_topic(self.doc_row(d))));
        }
        out
    }

    pub fn dump(&self, vocab: &Vocab, top_n: usize) -> TopicDump {
        let sizes = self.memberships();
        TopicDump {
            k: self.k,
            alpha: self.alpha,
            beta: self.beta,
            vocab_size: self.vocab_size,
            log_likelihoods: self.log_likelihoods.clone(),
            topics: (0..self.k)
                .map(|t| TopicSummary {
                    topic: t,
                    tokens: self.topic_totals[t],
                    queries: sizes.get(&t).map_or(0, Vec::len),
                    top_words: self
                        .top_words(t, top_n)
                        .into_iter()
                        .map(|(w, c)| (vocab.piece(w).to_string(), c))
                        .collect(),
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopicSummary {
    pub topic: usize,
    pub tokens: u32,
    pub queries: usize,
    pub top_words: Vec<(String, u32)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopicDump {
    pub k: usize,
    pub alpha: f64,
    pub beta: f64,
    pub vocab_size: usize,
    pub log_likelihoods: Vec<(usize, f64)>,
    pub topics: Vec<TopicSummary>,
}

/// Runs `iterations` sweeps, calling `after_sweep` with the sweep number
/// (from 1) after each one.
pub fn fit_lda_with<F>(
    docs: &[TopicDocument],
    vocab_size: usize,
    cfg: &LdaConfig,
    seed: u64,
    mut after_sweep: F,
) -> Result<TopicModel, TopicError>
where
    F: FnMut(usize, &LdaSampler) -> Result<(), TopicError>,
{
    let mut s = LdaSampler::new(docs, vocab_size, cfg.topics, cfg.alpha(), cfg.beta, seed)?;
    let every = cfg.likelihood_every.max(1);
    let mut lls = vec![(0, s.log_likelihood())];
    for sweep in 1..=cfg.iterations {
        s.sweep();
        if sweep % every == 0 || sweep == cfg.iterations {
            lls.push((sweep, s.log_likelihood()));
        }
        after_sweep(sweep, &s)?;
    }
    Ok(s.into_model(docs.iter().map(|d| d.query_id.clone()).collect(), lls))
}

pub fn fit_lda(docs: &[TopicDocument], vocab_size: usize, cfg: &LdaConfig, seed: u64) -> Result<TopicModel, TopicError> {
    fit_lda_with(docs, vocab_size, cfg, seed, |_, _| Ok(()))
}

/// Argmax of a doc-topic count row; ties and empty rows go to the smallest topic.
pub fn dominant_topic(row: &[u32]) -> usize {
    let mut best = 0;
    for (t, &c) in row.iter().enumerate() {
        if c > row[best] {
            best = t;
        }
    }
    best
}

/// Up to `m` query ids per topic, uniformly without replacement, each tagged
/// with its source topic. Within a topic the picks are sorted by query id.
pub fn sample_per_topic(memberships: &BTreeMap<usize, Vec<String>>, m: usize, seed: u64) -> Vec<(usize, String)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for (&topic, ids) in memberships {
        let mut picked: Vec<String> = ids.choose_multiple(&mut rng, m.min(ids.len())).cloned().collect();
        picked.sort();
        out.extend(picked.into_iter().map(|q| (topic, q)));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::log::ClickEvent;
    use chrono::{TimeZone, Utc};

    fn record(query: &str, clicks: &[(&str, &str)]) -> QueryRecord {
        QueryRecord {
            query_id: "q1".into(),
            session_id: "s1".into(),
            timestamp: Utc.with_ymd_and_hms(2024, 1, 1, 0, 0, 0).unwrap(),
            query: query.into(),
            ads_shown: 0,
            clicks: clicks
                .iter()
                .enumerate()
                .map(|(i, (u, s))| ClickEvent { url: (*u).into(), snippet: (*s).into(), dwell_seconds: 1.0, order: i as u32 + 1 })
                .collect(),
        }
    }

    fn words_vocab(words: &[&str]) -> Vocab {
        let mut pieces: Vec<String> = words.iter().map(|w| w.to_string()).collect();
        pieces.push("x".into());
        Vocab::from_pieces(pieces).unwrap()
    }

    #[test]
    fn doc_drops_host_and_unknowns() {
        let v = words_vocab(&["red", "shoes", "shop", "com", "cheap"]);
        let d = build_doc(&record("cheap", &[("https://shop.com/red-shoes", "")]), &v);
        let pieces: Vec<&str> = d.token_ids.iter().map(|&i| v.piece(i)).collect();
        assert_eq!(pieces, ["cheap", "red", "shoes"]);
        let q = build_doc(&record("red shoes", &[]), &v);
        assert_eq!(q.token_ids, vec![v.id("red").unwrap(), v.id("shoes").unwrap()]);
        let empty = build_doc(&record("zzz qqq", &[]), &v);
        assert!(empty.token_ids.is_empty());
    }

    #[test]
    fn snippets_follow_paths() {
        let v = words_vocab(&["a", "b", "c"]);
        let d = build_doc(&record("a", &[("http://h.org/b", "c")]), &v);
        let pieces: Vec<&str> = d.token_ids.iter().map(|&i| v.piece(i)).collect();
        assert_eq!(pieces, ["a", "b", "c"]);
    }

    fn doc(id: &str, t: &[u32]) -> TopicDocument {
        TopicDocument { query_id: id.into(), token_ids: t.to_vec() }
    }

    #[test]
    fn single_topic_takes_everything() {
        let docs = [doc("a", &[0, 1, 2]), doc("b", &[2, 2])];
        let cfg = LdaConfig { topics: 1, iterations: 3, ..LdaConfig::default() };
        let m = fit_lda(&docs, 3, &cfg, 0).unwrap();
        assert!(m.assignments.iter().flatten().all(|&t| t == 0));
        assert_eq!(m.topic_totals, vec![5]);
    }

    #[test]
    fn empty_corpus_is_rejected() {
        let docs = [doc("a", &[]), doc("b", &[])];
        assert_eq!(fit_lda(&docs, 3, &LdaConfig::default(), 0).unwrap_err(), TopicError::AllEmpty);
        assert!(matches!(fit_lda(&[doc("a", &[5])], 3, &LdaConfig::default(), 0), Err(TopicError::TokenOutOfRange { .. })));
    }

    /// Documents mixing two topics over disjoint halves of a 20-word vocabulary.
    fn two_topic_corpus(seed: u64) -> (Vec<TopicDocument>, Vec<Vec<usize>>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut docs = Vec::new();
        let mut truth = Vec::new();
        for d in 0..40 {
            let share = if d % 2 == 0 { 0.85 } else { 0.15 };
            let mut ids = Vec::new();
            let mut t = Vec::new();
            for _ in 0..40 {
                let topic = usize::from(rng.random::<f64>() >= share);
                ids.push((topic * 10 + rng.random_range(0..10)) as u32);
                t.push(topic);
            }
            docs.push(doc(&format!("d{d:02}"), &ids));
            truth.push(t);
        }
        (docs, truth)
    }

    fn purity(assign: &[Vec<u32>], truth: &[Vec<usize>]) -> f64 {
        let mut c = [[0usize; 2]; 2];
        for (z, t) in assign.iter().zip(truth) {
            for (&a, &b) in z.iter().zip(t) {
                c[a as usize][b] += 1;
            }
        }
        let total: usize = c.iter().flatten().sum();
        (c[0][0] + c[1][1]).max(c[0][1] + c[1][0]) as f64 / total as f64
    }

    #[test]
    fn recovers_disjoint_topics_and_conserves_counts() {
        let (docs, truth) = two_topic_corpus(11);
        let cfg = LdaConfig { topics: 2, iterations: 200, ..LdaConfig::default() };
        let m = fit_lda_with(&docs, 20, &cfg, 5, |_, s| s.check_invariants()).unwrap();
        let p = purity(&m.assignments, &truth);
        assert!(p >= 0.9, "purity {p}");
        let first = m.log_likelihoods.first().unwrap().1;
        let last = m.log_likelihoods.last().unwrap().1;
        assert!(last > first, "{first} -> {last}");
        assert_eq!(m.log_likelihoods.len(), 11);
    }

    #[test]
    fn fit_is_deterministic() {
        let (docs, _) = two_topic_corpus(3);
        let cfg = LdaConfig { topics: 3, iterations: 20, ..LdaConfig::default() };
        assert_eq!(fit_lda(&docs, 20, &cfg, 9).unwrap(), fit_lda(&docs, 20, &cfg, 9).unwrap());
    }

    #[test]
    fn dominant_topic_ties_go_low() {
        assert_eq!(dominant_topic(&[0, 5, 3]), 1);
        assert_eq!(dominant_topic(&[0, 0, 0]), 0);
        assert_eq!(dominant_topic(&[2, 2]), 0);
    }

    #[test]
    fn per_topic_sampling() {
        let mut m = BTreeMap::new();
        for t in 0..50 {
            m.insert(t, (0..35).map(|i| format!("t{t}q{i}")).collect::<Vec<_>>());
        }
        let s = sample_per_topic(&m, 30, 1);
        assert_eq!(s.len(), 1500);
        assert_eq!(s, sample_per_topic(&m, 30, 1));
        let mut small = BTreeMap::new();
        small.insert(7, vec!["a".to_string(), "b".into(), "c".into(), "d".into()]);
        let s = sample_per_topic(&small, 30, 2);
        assert_eq!(s.iter().map(|(_, q)| q.as_str()).collect::<Vec<_>>(), ["a", "b", "c", "d"]);
        assert!(s.iter().all(|(t, _)| *t == 7));
    }

    #[test]
    fn dump_lists_top_words() {
        let v = Vocab::from_pieces(["a", "b", "c"]).unwrap();
        let docs = [doc("q", &[v.id("a").unwrap(), v.id("a").unwrap(), v.id("b").unwrap()])];
        let m = fit_lda(&docs, v.size(), &LdaConfig { topics: 1, iterations: 1, ..LdaConfig::default() }, 0).unwrap();
        let dump = m.dump(&v, 20);
        assert_eq!(dump.topics[0].top_words, vec![("a".to_string(), 2), ("b".to_string(), 1)]);
        assert_eq!(m.membership_tsv(), "q\t0\n");
    }
}
