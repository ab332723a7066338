//! Stage bookkeeping: hashed inputs, atomic outputs, and reports.
//!
//! A stage reads every input through a [`StageRun`], which records a SHA-256
//! per input. Outputs are buffered in memory and only written once the stage
//! has fully succeeded, each through a temp file renamed into place, with
//! the report written last. A stage whose report still matches its config
//! hash, inputs and outputs is skipped.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context as _, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::{hex, PipelineConfig, Seeds};
use crate::Stage;

pub const REPORT_DIR: &str = "reports";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub stage: String,
    pub tool_version: String,
    pub config_hash: String,
    pub seeds: Seeds,
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
    pub result: serde_json::Value,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Outcome {
    Ran { report: PathBuf },
    UpToDate { report: PathBuf },
}

impl Outcome {
    pub fn report_path(&self) -> &Path {
        match self {
            Outcome::Ran { report } | Outcome::UpToDate { report } => report,
        }
    }
}

/// Resolved config plus the output directory every stage works in.
#[derive(Debug, Clone)]
pub struct Context {
    pub cfg: PipelineConfig,
    pub out: PathBuf,
    config_hash: String,
}

impl Context {
    pub fn new(mut cfg: PipelineConfig, out: impl Into<PathBuf>) -> Self {
        // The stage seed always wins over a seed inside the generator table.
        cfg.generator.seed = cfg.seeds().generate;
        let config_hash = cfg.hash();
        Self { cfg, out: out.into(), config_hash }
    }

    pub fn config_hash(&self) -> &str {
        &self.config_hash
    }

    pub fn artifact(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    pub fn report_path(&self, stage: Stage) -> PathBuf {
        self.out.join(REPORT_DIR).join(format!("{}.json", stage.name()))
    }

    pub fn load_report(&self, stage: Stage) -> Result<Report> {
        let path = self.report_path(stage);
        let text = std::fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
        Ok(serde_json::from_str(&text)?)
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex(&Sha256::digest(bytes))
}

/// Writes `bytes` to a sibling temp file and renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|d| !d.as_os_str().is_empty()).unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

pub(crate) struct StageRun<'a> {
    ctx: &'a Context,
    stage: Stage,
    inputs: BTreeMap<String, String>,
    outputs: Vec<(String, Vec<u8>)>,
}

impl<'a> StageRun<'a> {
    pub fn new(ctx: &'a Context, stage: Stage) -> Self {
        Self { ctx, stage, inputs: BTreeMap::new(), outputs: Vec::new() }
    }

    pub fn ctx(&self) -> &'a Context {
        self.ctx
    }

    /// Reads an input and records its hash under `label`.
    pub fn read(&mut self, label: &str, path: &Path) -> Result<Vec<u8>> {
        let bytes = std::fs::read(path).with_context(|| format!("missing input {label} ({})", path.display()))?;
        self.inputs.insert(label.to_string(), sha256_hex(&bytes));
        Ok(bytes)
    }

    /// Reads an artifact from the output directory.
    pub fn artifact(&mut self, name: &str) -> Result<Vec<u8>> {
        let path = self.ctx.artifact(name);
        self.read(name, &path)
    }

    /// Reads a configured external path, or the named artifact when unset.
    pub fn configured(&mut self, key: &str, path: Option<&Path>, fallback: &str) -> Result<Vec<u8>> {
        match path {
            Some(p) => self.read(&format!("paths.{key}"), p),
            None => self.artifact(fallback),
        }
    }

    /// True when a previous run left a matching report and untouched outputs.
    pub fn up_to_date(&self) -> bool {
        let Ok(prev) = self.ctx.load_report(self.stage) else { return false };
        prev.stage == self.stage.name()
            && prev.tool_version == env!("CARGO_PKG_VERSION")
            && prev.config_hash == self.ctx.config_hash
            && prev.inputs == self.inputs
            && prev.outputs.iter().all(|(name, hash)| {
                std::fs::read(self.ctx.artifact(name)).is_ok_and(|b| &sha256_hex(&b) == hash)
            })
    }

    pub fn skipped(&self) -> Outcome {
        Outcome::UpToDate { report: self.ctx.report_path(self.stage) }
    }

    pub fn output(&mut self, name: &str, bytes: impl Into<Vec<u8>>) {
        self.outputs.push((name.to_string(), bytes.into()));
    }

    /// Commits outputs, then the report.
    pub fn finish<R: Serialize>(self, result: R) -> Result<Outcome> {
        let mut hashes = BTreeMap::new();
        for (name, bytes) in &self.outputs {
            if hashes.insert(name.clone(), sha256_hex(bytes)).is_some() {
                bail!("output {name} written twice");
            }
        }
        let report = Report {
            stage: self.stage.name().to_string(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            config_hash: self.ctx.config_hash.clone(),
            seeds: self.ctx.cfg.seeds(),
            inputs: self.inputs,
            outputs: hashes,
            result: serde_json::to_value(result)?,
        };
        for (name, bytes) in &self.outputs {
            write_atomic(&self.ctx.artifact(name), bytes)?;
        }
        let mut text = serde_json::to_string_pretty(&report)?;
        text.push('\n');
        let path = self.ctx.report_path(self.stage);
        write_atomic(&path, text.as_bytes())?;
        Ok(Outcome::Ran { report: path })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn atomic_write_replaces_whole_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("nested/a.txt");
        write_atomic(&p, b"first version").unwrap();
        write_atomic(&p, b"v2").unwrap();
        assert_eq!(std::fs::read(&p).unwrap(), b"v2");
        assert_eq!(std::fs::read_dir(p.parent().unwrap()).unwrap().count(), 1);
    }

    #[test]
    fn sha256_known_vector() {
        assert_eq!(sha256_hex(b"abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    }
}
