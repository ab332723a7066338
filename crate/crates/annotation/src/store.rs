use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use crate::{AnnotationError, LabelEvent};

/// Append-only JSON-lines log of label events. Each append is synced to disk
/// before it is acknowledged; a failed append is truncated away so the file
/// never holds a partial line.
#[derive(Debug)]
pub struct LabelStore {
    path: PathBuf,
    file: File,
    events: Vec<LabelEvent>,
}

impl LabelStore {
    /// Opens or creates the store and reads back every event.
    pub fn open(path: &Path) -> Result<Self, AnnotationError> {
        let mut file = OpenOptions::new().create(true).read(true).append(true).open(path)?;
        file.seek(SeekFrom::Start(0))?;
        let mut events = Vec::new();
        for (i, line) in BufReader::new(&file).lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let e = serde_json::from_str(&line).map_err(|e| AnnotationError::Corrupt { line: i + 1, message: e.to_string() })?;
            events.push(e);
        }
        Ok(Self { path: path.to_path_buf(), file, events })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn events(&self) -> &[LabelEvent] {
        &self.events
    }

    pub fn append(&mut self, event: LabelEvent) -> Result<(), AnnotationError> {
        let mut line = serde_json::to_string(&event).expect("label events serialize");
        line.push('\n');
        let before = self.file.metadata()?.len();
        let written = self.file.write_all(line.as_bytes()).and_then(|_| self.file.sync_data());
        if let Err(e) = written {
            let _ = self.file.set_len(before);
            return Err(e.into());
        }
        self.events.push(event);
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::Label;
    use chrono::{TimeZone, Utc};
    use prodintent::analysis::IntentLabel;

    fn event(q: &str, l: Label) -> LabelEvent {
        LabelEvent { query_id: q.into(), annotator: "a".into(), label: l, timestamp: Utc.with_ymd_and_hms(2024, 1, 1, 0, 0, 0).unwrap() }
    }

    #[test]
    fn appends_survive_reopen() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("l.jsonl");
        let mut s = LabelStore::open(&path).unwrap();
        s.append(event("q1", Label::Skip)).unwrap();
        s.append(event("q2", Label::Intent(IntentLabel::Support))).unwrap();
        let s2 = LabelStore::open(&path).unwrap();
        assert_eq!(s2.events(), s.events());
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().count(), 2);
        assert!(text.contains("\"label\":\"Support\""));
    }

    #[test]
    fn corrupt_line_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("l.jsonl");
        std::fs::write(&path, "{\"query_id\":\"q\"}\n").unwrap();
        assert!(matches!(LabelStore::open(&path), Err(AnnotationError::Corrupt { line: 1, .. })));
    }
}
