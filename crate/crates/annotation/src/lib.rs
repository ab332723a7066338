//! Annotation workflow for intent labeling: a topic-ordered queue of sampled
//! queries, an append-only label store, Fleiss' kappa agreement, consensus
//! labels, and the HTTP API used by the annotation front end.

pub mod kappa;
pub mod server;
pub mod store;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::BufRead;
use std::path::Path;
use std::str::FromStr;

use chrono::{DateTime, Utc};
use prodintent::analysis::{IntentLabel, ALL_INTENTS};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use kappa::{consensus_labels, fleiss_kappa, KappaError};
pub use store::LabelStore;

/// An intent label or an explicit skip.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Label {
    Intent(IntentLabel),
    Skip,
}

pub const ALL_LABELS: [Label; 7] = [
    Label::Intent(ALL_INTENTS[0]),
    Label::Intent(ALL_INTENTS[1]),
    Label::Intent(ALL_INTENTS[2]),
    Label::Intent(ALL_INTENTS[3]),
    Label::Intent(ALL_INTENTS[4]),
    Label::Intent(ALL_INTENTS[5]),
    Label::Skip,
];

impl Label {
    pub fn as_str(self) -> &'static str {
        match self {
            Label::Intent(l) => l.as_str(),
            Label::Skip => "Skip",
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Label {
    type Err = AnnotationError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "Skip" {
            return Ok(Label::Skip);
        }
        s.parse().map(Label::Intent).map_err(|_| AnnotationError::UnknownLabel(s.to_string()))
    }
}

impl TryFrom<String> for Label {
    type Error = AnnotationError;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<Label> for String {
    fn from(l: Label) -> Self {
        l.as_str().to_string()
    }
}

#[derive(Debug, Error)]
pub enum AnnotationError {
    #[error("unknown label {0:?}")]
    UnknownLabel(String),
    #[error("unknown annotator {0:?}")]
    UnknownAnnotator(String),
    #[error("unknown query id {0:?}")]
    UnknownItem(String),
    #[error("duplicate query id {0:?} in queue")]
    DuplicateItem(String),
    #[error("at least one annotator is required")]
    NoAnnotators,
    #[error("label store line {line}: {message}")]
    Corrupt { line: usize, message: String },
    #[error("queue line {line}: {message}")]
    Queue { line: usize, message: String },
    #[error("storage failure: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ItemClick {
    pub url: String,
    #[serde(default)]
    pub snippet: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationItem {
    pub query_id: String,
    pub query: String,
    pub clicks: Vec<ItemClick>,
    pub topic: usize,
}

/// Reads a queue file: one JSON item per line, blank lines ignored.
pub fn read_queue<R: BufRead>(reader: R) -> Result<Vec<AnnotationItem>, AnnotationError> {
    let mut items = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let item = serde_json::from_str(&line).map_err(|e| AnnotationError::Queue { line: i + 1, message: e.to_string() })?;
        items.push(item);
    }
    Ok(items)
}

pub fn load_queue(path: &Path) -> Result<Vec<AnnotationItem>, AnnotationError> {
    read_queue(std::io::BufReader::new(std::fs::File::open(path)?))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelEvent {
    pub query_id: String,
    pub annotator: String,
    pub label: Label,
    pub timestamp: DateTime<Utc>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ItemStatus {
    Pending,
    PartiallyLabeled,
    Complete,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemView {
    #[serde(flatten)]
    pub item: AnnotationItem,
    pub status: ItemStatus,
    pub labels: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Progress {
    pub total: usize,
    pub pending: usize,
    pub partially_labeled: usize,
    pub complete: usize,
    pub per_annotator: BTreeMap<String, usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementReport {
    /// `None` when no item has a full set of non-Skip labels.
    pub kappa: Option<f64>,
    pub n_items: usize,
    pub n_raters: usize,
    pub category_proportions: BTreeMap<IntentLabel, f64>,
}

/// Queue plus live labels. Every change goes through the label store first.
#[derive(Debug)]
pub struct Workspace {
    items: Vec<AnnotationItem>,
    index: BTreeMap<String, usize>,
    annotators: BTreeSet<String>,
    /// (query_id, annotator) → latest label.
    live: BTreeMap<(String, String), Label>,
    store: LabelStore,
}

impl Workspace {
    /// Builds the queue in (topic, query_id) order and replays the store.
    pub fn new<I, S>(mut items: Vec<AnnotationItem>, annotators: I, store: LabelStore) -> Result<Self, AnnotationError>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let annotators: BTreeSet<String> = annotators.into_iter().map(Into::into).collect();
        if annotators.is_empty() {
            return Err(AnnotationError::NoAnnotators);
        }
        items.sort_by(|a, b| (a.topic, &a.query_id).cmp(&(b.topic, &b.query_id)));
        let mut index = BTreeMap::new();
        for (i, it) in items.iter().enumerate() {
            if index.insert(it.query_id.clone(), i).is_some() {
                return Err(AnnotationError::DuplicateItem(it.query_id.clone()));
            }
        }
        let mut ws = Self { items, index, annotators, live: BTreeMap::new(), store };
        let events = ws.store.events().to_vec();
        for e in events {
            // Events for items or annotators no longer in the queue are kept
            // in the file but ignored.
            if ws.index.contains_key(&e.query_id) && ws.annotators.contains(&e.annotator) {
                ws.live.insert((e.query_id, e.annotator), e.label);
            }
        }
        Ok(ws)
    }

    pub fn items(&self) -> &[AnnotationItem] {
        &self.items
    }

    pub fn annotators(&self) -> impl Iterator<Item = &str> {
        self.annotators.iter().map(String::as_str)
    }

    fn count(&self, query_id: &str) -> usize {
        self.annotators.iter().filter(|a| self.live.contains_key(&(query_id.to_string(), (*a).clone()))).count()
    }

    pub fn status(&self, query_id: &str) -> Result<ItemStatus, AnnotationError> {
        if !self.index.contains_key(query_id) {
            return Err(AnnotationError::UnknownItem(query_id.to_string()));
        }
        Ok(match self.count(query_id) {
            0 => ItemStatus::Pending,
            n if n == self.annotators.len() => ItemStatus::Complete,
            _ => ItemStatus::PartiallyLabeled,
        })
    }

    pub fn item(&self, query_id: &str) -> Result<ItemView, AnnotationError> {
        let i = *self.index.get(query_id).ok_or_else(|| AnnotationError::UnknownItem(query_id.to_string()))?;
        Ok(ItemView { item: self.items[i].clone(), status: self.status(query_id)?, labels: self.count(query_id) })
    }

    pub fn label_of(&self, query_id: &str, annotator: &str) -> Option<Label> {
        self.live.get(&(query_id.to_string(), annotator.to_string())).copied()
    }

    /// First item in queue order this annotator has not labeled.
    pub fn next_item(&self, annotator: &str) -> Result<Option<&AnnotationItem>, AnnotationError> {
        if !self.annotators.contains(annotator) {
            return Err(AnnotationError::UnknownAnnotator(annotator.to_string()));
        }
        Ok(self.items.iter().find(|it| !self.live.contains_key(&(it.query_id.clone(), annotator.to_string()))))
    }

    /// Persists the label, then updates live state. A resubmission replaces
    /// the annotator's earlier label for that item.
    pub fn submit_label(&mut self, annotator: &str, query_id: &str, label: Label) -> Result<ItemStatus, AnnotationError> {
        if !self.annotators.contains(annotator) {
            return Err(AnnotationError::UnknownAnnotator(annotator.to_string()));
        }
        if !self.index.contains_key(query_id) {
            return Err(AnnotationError::UnknownItem(query_id.to_string()));
        }
        let event = LabelEvent {
            query_id: query_id.to_string(),
            annotator: annotator.to_string(),
            label,
            timestamp: Utc::now(),
        };
        self.store.append(event)?;
        self.live.insert((query_id.to_string(), annotator.to_string()), label);
        self.status(query_id)
    }

    pub fn progress(&self) -> Progress {
        let mut p = Progress {
            total: self.items.len(),
            pending: 0,
            partially_labeled: 0,
            complete: 0,
            per_annotator: self.annotators.iter().map(|a| (a.clone(), 0)).collect(),
        };
        for it in &self.items {
            match self.status(&it.query_id).expect("queue item") {
                ItemStatus::Pending => p.pending += 1,
                ItemStatus::PartiallyLabeled => p.partially_labeled += 1,
                ItemStatus::Complete => p.complete += 1,
            }
        }
        for (_, a) in self.live.keys() {
            *p.per_annotator.get_mut(a).expect("registered annotator") += 1;
        }
        p
    }

    /// Kappa over items that every annotator labeled with a non-Skip label.
    pub fn agreement(&self) -> AgreementReport {
        let mut table = Vec::new();
        for it in &self.items {
            let labels: Option<Vec<IntentLabel>> = self
                .annotators
                .iter()
                .map(|a| match self.label_of(&it.query_id, a) {
                    Some(Label::Intent(l)) => Some(l),
                    _ => None,
                })
                .collect();
            if let Some(labels) = labels {
                let mut row = vec![0usize; ALL_INTENTS.len()];
                for l in labels {
                    row[ALL_INTENTS.iter().position(|&x| x == l).expect("closed set")] += 1;
                }
                table.push(row);
            }
        }
        agreement_from_table(&table, self.annotators.len())
    }

    pub fn consensus(&self) -> BTreeMap<String, IntentLabel> {
        consensus_labels(self.live.iter().map(|((q, _), l)| (q.as_str(), *l)))
    }
}

/// Agreement summary for an items x [`ALL_INTENTS`] count table.
pub fn agreement_from_table(table: &[Vec<usize>], raters: usize) -> AgreementReport {
    let kappa = fleiss_kappa(table, raters).ok();
    let total: usize = table.iter().flatten().sum();
    let category_proportions = ALL_INTENTS
        .iter()
        .enumerate()
        .map(|(j, &l)| {
            let c: usize = table.iter().map(|r| r[j]).sum();
            (l, if total == 0 { 0.0 } else { c as f64 / total as f64 })
        })
        .collect();
    AgreementReport { kappa, n_items: table.len(), n_raters: raters, category_proportions }
}

#[cfg(test)]
pub(crate) mod fixtures {
    use super::*;

    pub fn items(n: usize) -> Vec<AnnotationItem> {
        (0..n)
            .map(|i| AnnotationItem {
                query_id: format!("q{i:02}"),
                query: format!("query {i}"),
                clicks: vec![ItemClick { url: format!("https://shop.com/p{i}"), snippet: "s".into() }],
                topic: (n - i) % 3,
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::fixtures::items;
    use super::*;
    use IntentLabel::*;

    fn ws(n: usize, annotators: &[&str]) -> (tempfile::TempDir, Workspace) {
        let dir = tempfile::tempdir().unwrap();
        let store = LabelStore::open(&dir.path().join("labels.jsonl")).unwrap();
        let w = Workspace::new(items(n), annotators.iter().copied(), store).unwrap();
        (dir, w)
    }

    #[test]
    fn label_wire_strings() {
        let names: Vec<&str> = ALL_LABELS.iter().map(|l| l.as_str()).collect();
        assert_eq!(names, ["Comparison", "Informational", "Navigational", "Support", "Transactional", "NotProduct", "Skip"]);
        for l in ALL_LABELS {
            assert_eq!(serde_json::from_str::<Label>(&serde_json::to_string(&l).unwrap()).unwrap(), l);
        }
        assert!(serde_json::from_str::<Label>("\"Shopping\"").is_err());
    }

    #[test]
    fn next_item_follows_topic_then_id() {
        let (_d, w) = ws(3, &["a1"]);
        // topics: q00 → 0, q01 → 2, q02 → 1.
        assert_eq!(w.next_item("a1").unwrap().unwrap().query_id, "q00");
        let order: Vec<&str> = w.items().iter().map(|i| i.query_id.as_str()).collect();
        assert_eq!(order, ["q00", "q02", "q01"]);
        assert!(matches!(w.next_item("zz"), Err(AnnotationError::UnknownAnnotator(_))));
    }

    #[test]
    fn interleaved_annotators_see_each_item_once() {
        let (_d, mut w) = ws(5, &["a1", "a2"]);
        let mut seen: BTreeMap<&str, Vec<String>> = BTreeMap::new();
        loop {
            let mut progressed = false;
            for a in ["a1", "a2"] {
                if let Some(it) = w.next_item(a).unwrap().cloned() {
                    w.submit_label(a, &it.query_id, Label::Intent(Support)).unwrap();
                    seen.entry(a).or_default().push(it.query_id);
                    progressed = true;
                }
            }
            if !progressed {
                break;
            }
        }
        for a in ["a1", "a2"] {
            let mut ids = seen[a].clone();
            ids.sort();
            ids.dedup();
            assert_eq!(ids.len(), 5);
            assert_eq!(seen[a].len(), 5);
        }
        assert!(w.next_item("a1").unwrap().is_none());
    }

    #[test]
    fn status_moves_through_states_and_resubmission_overwrites() {
        let (_d, mut w) = ws(2, &["a1", "a2", "a3"]);
        assert_eq!(w.status("q00").unwrap(), ItemStatus::Pending);
        assert_eq!(w.submit_label("a1", "q00", Label::Intent(Transactional)).unwrap(), ItemStatus::PartiallyLabeled);
        w.submit_label("a2", "q00", Label::Intent(Transactional)).unwrap();
        assert_eq!(w.submit_label("a3", "q00", Label::Skip).unwrap(), ItemStatus::Complete);
        w.submit_label("a3", "q00", Label::Intent(Comparison)).unwrap();
        assert_eq!(w.label_of("q00", "a3"), Some(Label::Intent(Comparison)));
        assert_eq!(w.item("q00").unwrap().labels, 3);
        assert!(matches!(w.submit_label("a1", "nope", Label::Skip), Err(AnnotationError::UnknownItem(_))));
        let p = w.progress();
        assert_eq!((p.total, p.pending, p.partially_labeled, p.complete), (2, 1, 0, 1));
        assert_eq!(p.per_annotator["a3"], 1);
    }

    #[test]
    fn agreement_uses_fully_covered_items_only() {
        let (_d, mut w) = ws(3, &["a1", "a2"]);
        assert_eq!(w.agreement().kappa, None);
        w.submit_label("a1", "q00", Label::Intent(Support)).unwrap();
        w.submit_label("a2", "q00", Label::Intent(Support)).unwrap();
        w.submit_label("a1", "q01", Label::Intent(Comparison)).unwrap();
        w.submit_label("a2", "q01", Label::Intent(Transactional)).unwrap();
        w.submit_label("a1", "q02", Label::Skip).unwrap();
        w.submit_label("a2", "q02", Label::Intent(Support)).unwrap();
        let r = w.agreement();
        assert_eq!(r.n_items, 2);
        let expected = fleiss_kappa(&[vec![0, 0, 0, 2, 0, 0], vec![1, 0, 0, 0, 1, 0]], 2).unwrap();
        assert_eq!(r.kappa, Some(expected));
        assert!((r.category_proportions.values().sum::<f64>() - 1.0).abs() < 1e-12);
        assert_eq!(r.category_proportions[&Support], 0.5);
    }

    #[test]
    fn restart_replays_identical_state() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("labels.jsonl");
        let mut w = Workspace::new(items(4), ["a1", "a2"], LabelStore::open(&path).unwrap()).unwrap();
        w.submit_label("a1", "q00", Label::Intent(Support)).unwrap();
        w.submit_label("a2", "q00", Label::Intent(Navigational)).unwrap();
        w.submit_label("a2", "q00", Label::Intent(Support)).unwrap();
        w.submit_label("a1", "q03", Label::Skip).unwrap();
        let (progress, agreement, next) = (w.progress(), w.agreement(), w.next_item("a1").unwrap().cloned());
        drop(w);
        let w = Workspace::new(items(4), ["a1", "a2"], LabelStore::open(&path).unwrap()).unwrap();
        assert_eq!(w.progress(), progress);
        assert_eq!(w.agreement(), agreement);
        assert_eq!(w.next_item("a1").unwrap().cloned(), next);
        assert_eq!(w.consensus()["q00"], Support);
    }

    #[test]
    fn duplicate_queue_ids_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let mut its = items(2);
        its[1].query_id = its[0].query_id.clone();
        let err = Workspace::new(its, ["a"], LabelStore::open(&dir.path().join("l")).unwrap()).unwrap_err();
        assert!(matches!(err, AnnotationError::DuplicateItem(_)));
    }
}
