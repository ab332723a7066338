//! Query-log data model, the line-delimited log format, and session assembly.
//!
//! Each line of a log file is one JSON object:
//!
//! ```text
//! {"query_id":"q1","session_id":"s1","timestamp":"2019-09-03T10:15:00Z",
//!  "query":"iphone x case","ads_shown":2,
//!  "clicks":[{"url":"https://amazon.com/dp/1","snippet":"...","dwell_seconds":41.0,"order":1}]}
//! ```

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use chrono::{DateTime, SecondsFormat, Utc};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClickEvent {
    pub url: String,
    #[serde(default)]
    pub snippet: String,
    pub dwell_seconds: f64,
    /// 1-based click position within the query.
    pub order: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryRecord {
    pub query_id: String,
    pub session_id: String,
    #[serde(serialize_with = "ser_utc", deserialize_with = "de_utc")]
    pub timestamp: DateTime<Utc>,
    pub query: String,
    pub ads_shown: u32,
    #[serde(default)]
    pub clicks: Vec<ClickEvent>,
}

impl QueryRecord {
    /// The click with the highest order, if any.
    pub fn last_click(&self) -> Option<&ClickEvent> {
        self.clicks.last()
    }

    pub fn total_dwell(&self) -> f64 {
        self.clicks.iter().map(|c| c.dwell_seconds).sum()
    }

    /// Canonical single-line serialization.
    pub fn to_line(&self) -> String {
        serde_json::to_string(self).expect("record serialization is infallible")
    }

    fn validate(mut self) -> Result<Self, String> {
        if self.query.trim().is_empty() {
            return Err("empty query".into());
        }
        if self.query_id.is_empty() {
            return Err("empty query_id".into());
        }
        for click in &self.clicks {
            if !click.dwell_seconds.is_finite() {
                return Err("non-finite dwell".into());
            }
            if click.dwell_seconds < 0.0 {
                return Err("negative dwell".into());
            }
            if click.order == 0 {
                return Err("click order must be >= 1".into());
            }
        }
        self.clicks.sort_by_key(|c| c.order);
        for (i, click) in self.clicks.iter().enumerate() {
            if click.order as usize != i + 1 {
                return Err(format!(
                    "click orders must be unique and contiguous from 1 (found {} at position {})",
                    click.order,
                    i + 1
                ));
            }
        }
        Ok(self)
    }
}

fn ser_utc<S: Serializer>(ts: &DateTime<Utc>, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_str(&ts.to_rfc3339_opts(SecondsFormat::AutoSi, true))
}

fn de_utc<'de, D: Deserializer<'de>>(d: D) -> Result<DateTime<Utc>, D::Error> {
    let raw = String::deserialize(d)?;
    DateTime::parse_from_rfc3339(&raw)
        .map(|t| t.with_timezone(&Utc))
        .map_err(|e| serde::de::Error::custom(format!("bad timestamp {raw:?}: {e}")))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LineError {
    /// 1-based line number in the input.
    pub line: usize,
    pub message: String,
}

impl std::fmt::Display for LineError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "line {}: {}", self.line, self.message)
    }
}

#[derive(Debug, Default)]
pub struct ParsedLog {
    pub records: Vec<QueryRecord>,
    pub errors: Vec<LineError>,
}

#[derive(Debug, Error)]
pub enum LogError {
    #[error("i/o error reading log: {0}")]
    Io(#[from] std::io::Error),
}

/// Parses a line-delimited log. Malformed lines are collected as per-line
/// errors; blank lines are ignored.
pub fn parse_log<R: BufRead>(reader: R) -> Result<ParsedLog, LogError> {
    let mut out = ParsedLog::default();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        match parse_line(&line) {
            Ok(rec) => out.records.push(rec),
            Err(message) => out.errors.push(LineError { line: idx + 1, message }),
        }
    }
    Ok(out)
}

pub fn parse_line(line: &str) -> Result<QueryRecord, String> {
    let rec: QueryRecord = serde_json::from_str(line).map_err(|e| e.to_string())?;
    rec.validate()
}

pub fn write_log<W: Write>(mut w: W, records: &[QueryRecord]) -> std::io::Result<()> {
    for rec in records {
        writeln!(w, "{}", rec.to_line())?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Session {
    pub session_id: String,
    pub records: Vec<QueryRecord>,
}

impl Session {
    pub fn start(&self) -> DateTime<Utc> {
        self.records[0].timestamp
    }
}

/// Groups records by session id. Records inside a session are ordered by
/// (timestamp, query_id); sessions by (first timestamp, session_id).
pub fn build_sessions(records: &[QueryRecord]) -> Vec<Session> {
    let mut groups: BTreeMap<&str, Vec<QueryRecord>> = BTreeMap::new();
    for rec in records {
        groups.entry(&rec.session_id).or_default().push(rec.clone());
    }
    let mut sessions: Vec<Session> = groups
        .into_iter()
        .map(|(id, mut recs)| {
            recs.sort_by(|a, b| {
                a.timestamp
                    .cmp(&b.timestamp)
                    .then_with(|| a.query_id.cmp(&b.query_id))
            });
            Session { session_id: id.to_string(), records: recs }
        })
        .collect();
    sessions.sort_by(|a, b| a.start().cmp(&b.start()).then_with(|| a.session_id.cmp(&b.session_id)));
    sessions
}
