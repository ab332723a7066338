use std::path::{Path, PathBuf};

use anyhow::{Context as _, Result};
use prodintent::learners::{Hyperparams, ModelKind};
use prodintent::supervision::HeuristicKind;
use prodintent::syngen::GeneratorConfig;
use prodintent::text::EmbeddingConfig;
use prodintent::topics::LdaConfig;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// External inputs. Anything left unset is read from, or produced into, the
/// output directory.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    /// Query log; defaults to `log.jsonl` written by `generate`.
    pub log: Option<PathBuf>,
    /// Hand-labeled log for `evaluate-heuristics`; defaults to `log`.
    pub gold_log: Option<PathBuf>,
    /// `query_id<TAB>label` gold file; defaults to `truth.tsv`.
    pub gold_labels: Option<PathBuf>,
    /// Intent labels for `train-intent`; defaults to `consensus.tsv`.
    pub intent_labels: Option<PathBuf>,
    /// Intent labels for `analyze`; defaults to `intents.tsv`.
    pub analysis_labels: Option<PathBuf>,
    pub categories: Option<PathBuf>,
    pub products: Option<PathBuf>,
}

/// Which records the topic, feature and intent stages look at.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scope {
    /// Only queries the product classifier marked positive.
    Product,
    All,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Base seed. Every stage seed is derived from it.
    pub seed: u64,
    pub paths: Paths,
    pub generator: GeneratorConfig,
    pub vocab_size: usize,
    pub embeddings: EmbeddingConfig,
    pub heuristic: HeuristicKind,
    /// Weak-set size per class; `None` balances to the smaller stratum.
    pub weak_per_class: Option<usize>,
    pub folds: usize,
    /// Cross-validated in order; the first is kept as the product model.
    pub product_models: Vec<ModelKind>,
    pub intent_model: ModelKind,
    /// Train the intent classifier with NotProduct as a sixth class.
    pub with_not_product: bool,
    pub scope: Scope,
    pub lda: LdaConfig,
    pub top_words: usize,
    pub per_cluster: usize,
    pub annotators: Vec<String>,
    pub listen: String,
    pub hyper: Hyperparams,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            seed: 7,
            paths: Paths::default(),
            generator: GeneratorConfig::default(),
            vocab_size: 2000,
            embeddings: EmbeddingConfig::default(),
            heuristic: HeuristicKind::AdsAndCategories,
            weak_per_class: None,
            folds: 5,
            product_models: vec![ModelKind::MLP, ModelKind::LinearSVM],
            intent_model: ModelKind::LinearSVM,
            with_not_product: false,
            scope: Scope::Product,
            lda: LdaConfig::default(),
            top_words: 20,
            per_cluster: 10,
            annotators: vec!["a1".into(), "a2".into(), "a3".into()],
            listen: "127.0.0.1:8080".into(),
            hyper: Hyperparams::default(),
        }
    }
}

/// Command-line values that take precedence over the config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub topics: Option<usize>,
    pub folds: Option<usize>,
    pub dim: Option<usize>,
    pub vocab_size: Option<usize>,
    pub per_cluster: Option<usize>,
    pub listen: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Seeds {
    pub generate: u64,
    pub weak_label: u64,
    pub embeddings: u64,
    pub product: u64,
    pub lda: u64,
    pub sample: u64,
    pub intent: u64,
}

impl Seeds {
    pub fn derive(base: u64) -> Self {
        Self {
            generate: base,
            weak_label: base.wrapping_add(1),
            embeddings: base.wrapping_add(2),
            product: base.wrapping_add(3),
            lda: base.wrapping_add(4),
            sample: base.wrapping_add(5),
            intent: base.wrapping_add(6),
        }
    }
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        Ok(toml::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        Self::from_toml(&text).with_context(|| format!("parsing config {}", path.display()))
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(s) = o.seed {
            self.seed = s;
        }
        if let Some(k) = o.topics {
            self.lda.topics = k;
        }
        if let Some(k) = o.folds {
            self.folds = k;
        }
        if let Some(d) = o.dim {
            self.embeddings.dim = d;
        }
        if let Some(v) = o.vocab_size {
            self.vocab_size = v;
        }
        if let Some(m) = o.per_cluster {
            self.per_cluster = m;
        }
        if let Some(l) = &o.listen {
            self.listen = l.clone();
        }
    }

    pub fn seeds(&self) -> Seeds {
        Seeds::derive(self.seed)
    }

    /// SHA-256 of the canonical JSON form of the effective config.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        hex(&Sha256::digest(&bytes))
    }
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toml_round_trip_and_overrides() {
        let mut cfg = PipelineConfig::from_toml(
            r#"
            seed = 11
            folds = 3
            product_models = ["LinearSVM"]
            [paths]
            log = "q.jsonl"
            [generator]
            n_sessions = 50
            intent_mix = { Transactional = 0.5, NotProduct = 0.5 }
            [lda]
            topics = 4
            "#,
        )
        .unwrap();
        assert_eq!(cfg.paths.log.as_deref(), Some(Path::new("q.jsonl")));
        assert_eq!(cfg.generator.intent_mix.len(), 2);
        assert_eq!(cfg.lda.iterations, LdaConfig::default().iterations);
        let before = cfg.hash();
        cfg.apply(&Overrides { seed: Some(3), topics: Some(9), ..Default::default() });
        assert_eq!((cfg.seed, cfg.lda.topics), (3, 9));
        assert_ne!(cfg.hash(), before);
        assert_eq!(cfg.hash(), cfg.clone().hash());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(PipelineConfig::from_toml("sed = 1").is_err());
    }

    #[test]
    fn seeds_are_distinct() {
        let s = Seeds::derive(u64::MAX);
        let all = [s.generate, s.weak_label, s.embeddings, s.product, s.lda, s.sample, s.intent];
        let set: std::collections::BTreeSet<_> = all.iter().collect();
        assert_eq!(set.len(), all.len());
    }
}
