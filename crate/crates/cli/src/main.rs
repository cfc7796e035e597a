use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use cactus_core::config::ExperimentConfig;
use cactus_core::pipeline::{self, Layout};
use cactus_core::{Error, Result};

/// Collaborative-filtering guided image categorization, one stage per command.
#[derive(Debug, Parser)]
#[command(name = "cactus", version)]
struct Cli {
    /// Experiment configuration (TOML).
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Overrides the config's top-level seed.
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,

    /// Output root; falls back to $CACTUS_OUT, then ./runs.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Load or generate the dataset and write the split and interaction files.
    Prepare,
    /// Train the CF model and export item vectors.
    TrainCf,
    /// Compute per-item confidence weights for `guidance.scheme`.
    Weights,
    /// Train the image model selected by `mtl.regime` and `guidance.scheme`.
    Train,
    /// Evaluate checkpoints on the test split and render the report.
    Evaluate {
        /// Checkpoints to compare; defaults to every model of the seed.
        checkpoints: Vec<PathBuf>,
    },
    /// Label-ratio sweep over `eval.ratios` and `eval.seeds`.
    Sweep,
}

fn run(cli: Cli) -> Result<()> {
    let Some(path) = &cli.config else {
        return Err(Error::Config("--config <PATH> is required".into()));
    };
    let mut cfg = ExperimentConfig::load(path).map_err(|e| match e {
        Error::Io { .. } => Error::Config(e.to_string()),
        e => e,
    })?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    let cfg = cfg.resolved();
    cfg.validate()?;
    let out = pipeline::output_root(cli.out.as_deref());
    let layout = Layout::new(&out, cfg.seed);
    match cli.command {
        Command::Prepare => {
            let p = pipeline::cmd_prepare(&cfg, &layout)?;
            println!("split {} written to {}", p.split.hash(), layout.splits().display());
        }
        Command::TrainCf => {
            let r = pipeline::cmd_train_cf(&cfg, &layout)?;
            for m in &r.models {
                println!("{}\tAUC {:.4}\t[{:.4}, {:.4}]", m.model, m.auc, m.ci.lo, m.ci.hi);
            }
        }
        Command::Weights => {
            let t = pipeline::cmd_weights(&cfg, &layout)?;
            println!(
                "{} weights for {} items written to {}",
                t.scheme.name(),
                t.len(),
                layout.weights(t.scheme).display()
            );
        }
        Command::Train => {
            let s = pipeline::cmd_train(&cfg, &layout)?;
            let val = s.best_val_map.map_or_else(|| "n/a".to_owned(), |v| format!("{v:.4}"));
            println!("{}\tbest epoch {}\tval mAP {val}\t{:.1}s", s.method, s.best_epoch, s.wall_clock_secs);
        }
        Command::Evaluate { checkpoints } => {
            let files = pipeline::cmd_evaluate(&cfg, &layout, &checkpoints)?;
            println!("{}", files.results.display());
            for t in &files.tables {
                println!("{}", t.display());
            }
        }
        Command::Sweep => {
            let outcome = pipeline::cmd_sweep(&cfg, &out)?;
            println!(
                "{} runs written to {}",
                outcome.reports.len(),
                pipeline::sweep_dir(&out).display()
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_validation() { 2 } else { 1 })
        }
    }
}
