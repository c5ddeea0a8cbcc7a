use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use pts_core::align::Metric;

use crate::commands::{
    cmd_align, cmd_evaluate, cmd_gradcheck, cmd_preprocess, cmd_summarize, cmd_synth, cmd_teacher,
    cmd_train, comparison_table, write_effective_config, SplitChoice,
};
use crate::config::{RunConfig, WORKDIR_ENV};
use crate::error::{CliError, Result};

#[derive(Debug, Parser)]
#[command(
    name = "pts",
    version,
    about = "Page-based long-document summarization pipeline"
)]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// JSON run configuration; missing fields take their defaults
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Seed for every random stream (synth, init, shuffling, gradient check)
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Read at most N corpus lines
    #[arg(long, global = true)]
    pub limit: Option<usize>,

    /// Alignment metric: embed-cosine, rouge1, rouge2, rougeL, or `all` for align
    #[arg(long, global = true)]
    pub metric: Option<String>,

    /// Weight of the distillation loss
    #[arg(long, global = true)]
    pub lambda: Option<f64>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Clean, sentence-split and paginate the corpus; fit the embedder
    Preprocess,
    /// Assign summary sentences to pages
    Align,
    /// Build teacher page-importance distributions
    Teacher,
    /// Write a synthetic corpus with gold alignments
    Synth,
    /// Train the page-fused model
    Train,
    /// Generate summaries with a trained checkpoint
    Summarize {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = SplitChoice::Auto)]
        split: SplitChoice,
    },
    /// Score system summaries against references
    Evaluate {
        #[arg(long)]
        system: Option<PathBuf>,
        #[arg(long)]
        references: Option<PathBuf>,
    },
    /// Compare analytic gradients with finite differences
    Gradcheck {
        #[arg(long, hide = true)]
        corrupt_gradient: bool,
    },
}

fn parse_metric(s: &str) -> Result<Metric> {
    s.parse()
        .map_err(|e: pts_core::Error| CliError::Invalid(e.to_string()))
}

/// Config file, then flags, then `PTS_WORKDIR`.
pub fn effective_config(args: &GlobalArgs) -> Result<RunConfig> {
    let mut cfg = RunConfig::load(args.config.as_deref())?;
    if args.seed.is_some() {
        cfg.seed = args.seed;
    }
    if args.limit.is_some() {
        cfg.limit = args.limit;
    }
    if let Some(lambda) = args.lambda {
        cfg.lambda = lambda;
    }
    if let Some(m) = args.metric.as_deref().filter(|m| *m != "all") {
        cfg.alignment.metric = parse_metric(m)?;
    }
    let workdir = std::env::var_os(WORKDIR_ENV)
        .filter(|v| !v.is_empty())
        .map(PathBuf::from);
    cfg.resolve(workdir)
}

/// Runs one subcommand and returns the process exit code.
pub fn run(cli: Cli) -> Result<i32> {
    let cfg = effective_config(&cli.global)?;
    if cli.global.metric.as_deref() == Some("all") && !matches!(cli.command, Command::Align) {
        return Err(CliError::Invalid(
            "--metric all only applies to align".into(),
        ));
    }
    write_effective_config(&cfg)?;
    match cli.command {
        Command::Synth => {
            let out = cmd_synth(&cfg)?;
            println!(
                "wrote {} documents to {}",
                out.documents,
                out.corpus.display()
            );
            if out.page_tokens != cfg.page_limit {
                println!(
                    "note: synthetic pages hold {} tokens but page_limit is {}",
                    out.page_tokens, cfg.page_limit
                );
            }
        }
        Command::Preprocess => {
            let r = cmd_preprocess(&cfg)?;
            println!(
                "accepted {} of {} documents, rejected {}",
                r.accepted, r.total, r.rejected
            );
            for (reason, n) in &r.reasons {
                println!("  {reason}: {n}");
            }
        }
        Command::Align => {
            let metrics = match cli.global.metric.as_deref() {
                Some("all") => Metric::ALL.to_vec(),
                _ => vec![cfg.alignment.metric],
            };
            let rows = cmd_align(&cfg, &metrics)?;
            print!("{}", comparison_table(&rows));
        }
        Command::Teacher => {
            let rows = cmd_teacher(&cfg)?;
            println!("wrote {} teacher distributions", rows.len());
        }
        Command::Train => {
            let r = cmd_train(&cfg)?;
            println!(
                "trained {} steps on {} documents (validation {}, test {})",
                r.steps, r.train_docs, r.validation_docs, r.test_docs
            );
            if let (Some(a), Some(b)) = (r.initial_total, r.final_total) {
                println!("total loss {a:.4} -> {b:.4}");
            }
            if let (Some(step), Some(score)) = (r.best_step, r.best_score) {
                println!("best validation score {score:.4} at step {step}");
            }
        }
        Command::Summarize { checkpoint, split } => {
            let rows = cmd_summarize(&cfg, checkpoint.as_deref(), split)?;
            println!("wrote {} summaries", rows.len());
        }
        Command::Evaluate { system, references } => {
            let r = cmd_evaluate(&cfg, system.as_deref(), references.as_deref())?;
            let m = r.means;
            println!(
                "{} documents  rouge1 {:.4}  rouge2 {:.4}  rougeL {:.4}  embed_f1 {:.4}",
                r.n_docs, m.rouge1, m.rouge2, m.rouge_l, m.embed_f1
            );
        }
        Command::Gradcheck { corrupt_gradient } => {
            let out = cmd_gradcheck(&cfg, corrupt_gradient)?;
            for r in &out.runs {
                println!(
                    "lambda {:<4} max relative error {:.3e} at {} ({} checked)",
                    r.lambda, r.max_relative_error, r.worst_parameter, r.checked
                );
            }
            println!(
                "{} (tolerance {:.0e})",
                if out.passed { "PASS" } else { "FAIL" },
                out.tolerance
            );
            if !out.passed {
                return Ok(1);
            }
        }
    }
    Ok(0)
}
