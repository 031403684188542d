//! `msecg` command-line driver.
//!
//! Every subcommand resolves a [`RunConfig`] (profile defaults, then
//! `--config`, then `--set`, then `--seed`), writes it to its output
//! directory as `config.json`, and only then starts work.

pub mod commands;
pub mod config;
pub mod error;
pub mod plot;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

pub use config::{DataConfig, Profile, RunConfig};
pub use error::{CliError, CliResult};

#[derive(Debug, Parser)]
#[command(name = "msecg", version, about = "ECG super-resolution: data preparation, training, evaluation, plots")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// JSON configuration overlaid on the profile defaults.
    #[arg(long, global = true, env = "MSECG_CONFIG")]
    pub config: Option<PathBuf>,
    /// Master seed.
    #[arg(long, global = true, env = "MSECG_SEED")]
    pub seed: Option<u64>,
    #[arg(long, global = true, env = "MSECG_OUT_DIR", default_value = "out")]
    pub out_dir: PathBuf,
    /// Worker threads (default: all cores).
    #[arg(long, global = true, env = "MSECG_THREADS")]
    pub threads: Option<usize>,
    #[arg(long, global = true, env = "MSECG_PROFILE", value_enum, default_value_t = Profile::Paper)]
    pub profile: Profile,
    /// `section.key=value` override, JSON-parsed when possible. Repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub set: Vec<String>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Baseline {
    Li,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum SplitName {
    Train,
    Val,
    Test,
    All,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic record manifest and noise bank.
    Synth {
        /// Override `data.records`.
        #[arg(long)]
        records: Option<usize>,
    },
    /// Filter, decimate and corrupt records into an LR/HR pair dataset.
    Prepare {
        #[arg(long)]
        manifest: PathBuf,
        /// Directory with `noise.jsonl`; synthesized from the seed when absent.
        #[arg(long)]
        noise: Option<PathBuf>,
    },
    /// Two-stage training; writes `best.ckpt` and `train_log.csv`.
    Train {
        #[arg(long)]
        dataset: PathBuf,
    },
    /// Metrics report for a checkpoint or a baseline.
    Eval {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long, required_unless_present = "baseline", conflicts_with = "baseline")]
        checkpoint: Option<PathBuf>,
        #[arg(long, value_enum)]
        baseline: Option<Baseline>,
        #[arg(long, value_enum, default_value_t = SplitName::Test)]
        split: SplitName,
    },
    /// Reconstruct one LR raster with a checkpoint.
    Infer {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Pair dataset to take the input (and ground truth) from, with `--id`.
        #[arg(long, requires = "id", conflicts_with = "input")]
        dataset: Option<PathBuf>,
        #[arg(long)]
        id: Option<String>,
        /// Raw `.f32` LR raster (channel-major).
        #[arg(long, required_unless_present = "dataset")]
        input: Option<PathBuf>,
        /// Sample rate of `--input`.
        #[arg(long, default_value_t = 50.0)]
        sample_rate: f64,
        /// Optional HR reference raster for the figure.
        #[arg(long)]
        reference: Option<PathBuf>,
        /// Lead drawn in the figure.
        #[arg(long, default_value_t = 0)]
        lead: usize,
    },
    /// Overlay ground truth, LI and a reconstruction for one segment.
    Plot {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        id: String,
        #[arg(long, conflicts_with = "prediction")]
        checkpoint: Option<PathBuf>,
        /// Precomputed HR raster to draw instead of running a checkpoint.
        #[arg(long)]
        prediction: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        lead: usize,
    },
    /// Time the sequential and parallel scans.
    BenchScan {
        #[arg(long, value_delimiter = ',', default_values_t = [1024usize, 2048, 4096, 8192, 16384, 32768, 65536])]
        lengths: Vec<usize>,
        #[arg(long, default_value_t = 5)]
        reps: usize,
        #[arg(long, default_value_t = 16)]
        d_inner: usize,
        #[arg(long, default_value_t = 16)]
        d_state: usize,
    },
}

/// Resolves configuration, sizes the worker pool and dispatches.
pub fn run(cli: Cli) -> CliResult<()> {
    let g = &cli.global;
    if let Some(n) = g.threads {
        if n == 0 {
            return Err(CliError::Input("--threads must be positive".into()));
        }
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    let cfg = RunConfig::resolve(g.profile, g.config.as_deref(), &g.set, g.seed)?;
    cfg.write_snapshot(&g.out_dir)?;
    let out = g.out_dir.as_path();
    match cli.command {
        Command::Synth { records } => commands::synth(&cfg, out, records),
        Command::Prepare { manifest, noise } => commands::prepare(&cfg, out, &manifest, noise.as_deref()),
        Command::Train { dataset } => commands::train(&cfg, out, &dataset),
        Command::Eval { dataset, checkpoint, baseline: _, split } => {
            commands::eval(out, &dataset, checkpoint.as_deref(), split)
        }
        Command::Infer { checkpoint, dataset, id, input, sample_rate, reference, lead } => {
            let source = match (dataset, input) {
                (Some(d), _) => commands::InferSource::Dataset { dir: d, id: id.unwrap_or_default() },
                (None, Some(p)) => commands::InferSource::Raster { path: p, sample_rate, reference },
                (None, None) => return Err(CliError::Input("give --dataset/--id or --input".into())),
            };
            commands::infer(out, &checkpoint, source, lead)
        }
        Command::Plot { dataset, id, checkpoint, prediction, lead } => {
            commands::plot(out, &dataset, &id, checkpoint.as_deref(), prediction.as_deref(), lead)
        }
        Command::BenchScan { lengths, reps, d_inner, d_state } => {
            commands::bench_scan(&cfg, out, &lengths, reps, d_inner, d_state)
        }
    }
}
