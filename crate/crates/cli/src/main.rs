use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Parser, Subcommand};
use prodintent_cli::{run_stage, serve_annotation, Context, Outcome, Overrides, PipelineConfig, Stage};

#[derive(Debug, Parser)]
#[command(name = "prodintent", version, about = "Mine product-search intent from query logs")]
struct Cli {
    /// TOML pipeline config; defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Base seed, overriding the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Directory for artifacts and reports.
    #[arg(long, global = true, default_value = "work")]
    out: PathBuf,
    /// Number of LDA topics.
    #[arg(long, global = true)]
    topics: Option<usize>,
    /// Cross-validation folds.
    #[arg(long, global = true)]
    folds: Option<usize>,
    /// Embedding dimension.
    #[arg(long, global = true)]
    dim: Option<usize>,
    /// Target wordpiece vocabulary size.
    #[arg(long, global = true)]
    vocab_size: Option<usize>,
    /// Queries sampled per topic for annotation.
    #[arg(long, global = true)]
    per_cluster: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a synthetic log and its truth labels.
    Generate,
    /// Score the four heuristics against gold labels.
    EvaluateHeuristics,
    /// Sample a balanced weak-labeled product set.
    WeakLabel,
    /// Learn the wordpiece vocabulary.
    BuildVocab,
    /// Train skip-gram embeddings over wordpieces.
    TrainEmbeddings,
    /// Cross-validate and fit the product classifier.
    TrainProduct,
    /// Classify every query and report the product share.
    ProductShare,
    /// Fit the topic model over product queries.
    Lda,
    /// Draw the annotation queue from topic clusters.
    SampleAnnotation,
    /// Serve the annotation API.
    ServeAnnotation {
        /// Listen address, overriding the config.
        #[arg(long)]
        listen: Option<String>,
    },
    /// Agreement and consensus labels from the label store.
    Kappa,
    /// Write the intent feature matrix.
    Features,
    /// Cross-validate and fit the intent classifier.
    TrainIntent,
    /// Label queries with the intent classifier.
    ClassifyIntent,
    /// Intent metrics and co-occurrence.
    Analyze,
}

impl Command {
    fn stage(&self) -> Option<Stage> {
        Some(match self {
            Command::Generate => Stage::Generate,
            Command::EvaluateHeuristics => Stage::EvaluateHeuristics,
            Command::WeakLabel => Stage::WeakLabel,
            Command::BuildVocab => Stage::BuildVocab,
            Command::TrainEmbeddings => Stage::TrainEmbeddings,
            Command::TrainProduct => Stage::TrainProduct,
            Command::ProductShare => Stage::ProductShare,
            Command::Lda => Stage::Lda,
            Command::SampleAnnotation => Stage::SampleAnnotation,
            Command::ServeAnnotation { .. } => return None,
            Command::Kappa => Stage::Kappa,
            Command::Features => Stage::Features,
            Command::TrainIntent => Stage::TrainIntent,
            Command::ClassifyIntent => Stage::ClassifyIntent,
            Command::Analyze => Stage::Analyze,
        })
    }
}

fn context(cli: &Cli) -> Result<Context> {
    let mut cfg = match &cli.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    let listen = match &cli.command {
        Command::ServeAnnotation { listen } => listen.clone(),
        _ => None,
    };
    cfg.apply(&Overrides {
        seed: cli.seed,
        topics: cli.topics,
        folds: cli.folds,
        dim: cli.dim,
        vocab_size: cli.vocab_size,
        per_cluster: cli.per_cluster,
        listen,
    });
    Ok(Context::new(cfg, &cli.out))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let ctx = match context(&cli) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e:#}");
            return ExitCode::from(1);
        }
    };
    let result = match cli.command.stage() {
        Some(stage) => run_stage(stage, &ctx).map(|outcome| match outcome {
            Outcome::Ran { report } => println!("{stage}: wrote {}", report.display()),
            Outcome::UpToDate { report } => println!("{stage}: up to date ({})", report.display()),
        }),
        None => serve_annotation(&ctx),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
