//! Pipeline stages behind the `prodintent` command.
//!
//! Every stage reads its inputs from the output directory (or configured
//! external paths), writes its artifacts atomically, and leaves a JSON report
//! under `reports/` naming the config hash, seeds and input hashes.

pub mod artifacts;
pub mod config;
mod stages;

use std::fmt;
use std::net::SocketAddr;
use std::str::FromStr;
use std::sync::{Arc, Mutex};

use anyhow::{Context as _, Result};

pub use artifacts::{Context, Outcome, Report};
pub use config::{Overrides, Paths, PipelineConfig, Scope, Seeds};
pub use stages::{format_share, open_workspace};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Stage {
    Generate,
    EvaluateHeuristics,
    WeakLabel,
    BuildVocab,
    TrainEmbeddings,
    TrainProduct,
    ProductShare,
    Lda,
    SampleAnnotation,
    Kappa,
    Features,
    TrainIntent,
    ClassifyIntent,
    Analyze,
}

impl Stage {
    pub const ALL: [Stage; 14] = [
        Stage::Generate,
        Stage::EvaluateHeuristics,
        Stage::WeakLabel,
        Stage::BuildVocab,
        Stage::TrainEmbeddings,
        Stage::TrainProduct,
        Stage::ProductShare,
        Stage::Lda,
        Stage::SampleAnnotation,
        Stage::Kappa,
        Stage::Features,
        Stage::TrainIntent,
        Stage::ClassifyIntent,
        Stage::Analyze,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Generate => "generate",
            Stage::EvaluateHeuristics => "evaluate-heuristics",
            Stage::WeakLabel => "weak-label",
            Stage::BuildVocab => "build-vocab",
            Stage::TrainEmbeddings => "train-embeddings",
            Stage::TrainProduct => "train-product",
            Stage::ProductShare => "product-share",
            Stage::Lda => "lda",
            Stage::SampleAnnotation => "sample-annotation",
            Stage::Kappa => "kappa",
            Stage::Features => "features",
            Stage::TrainIntent => "train-intent",
            Stage::ClassifyIntent => "classify-intent",
            Stage::Analyze => "analyze",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Stage {
    type Err = anyhow::Error;
    fn from_str(s: &str) -> Result<Self> {
        Stage::ALL.into_iter().find(|st| st.name() == s).with_context(|| format!("unknown stage {s:?}"))
    }
}

/// Runs one stage. Errors carry the stage name.
pub fn run_stage(stage: Stage, ctx: &Context) -> Result<Outcome> {
    stages::run(stage, ctx).with_context(|| format!("stage {stage} failed"))
}

/// Serves the annotation API over the sampled queue until interrupted.
pub fn serve_annotation(ctx: &Context) -> Result<()> {
    let ws = open_workspace(ctx).context("stage serve-annotation failed")?;
    let addr: SocketAddr = ctx.cfg.listen.parse().with_context(|| format!("bad listen address {:?}", ctx.cfg.listen))?;
    let shared = Arc::new(Mutex::new(ws));
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(async move {
        eprintln!("serving annotation API on http://{addr}");
        prodintent_annotation::server::serve(shared, addr).await
    })
    .context("stage serve-annotation failed")
}
