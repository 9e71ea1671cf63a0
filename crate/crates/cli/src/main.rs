//! `crlkit`: reproducible two-view representation experiments.
//!
//! Exit codes: 0 success, 1 runtime failure (I/O, network), 2 usage or
//! configuration error, 3 numeric failure.

mod commands;
mod config;
mod data;
mod fetch;
mod models;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::ExperimentConfig;

/// A bad config, input file or argument combination (exit code 2).
#[derive(Debug)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

/// A failed numeric check (exit code 3).
#[derive(Debug)]
pub struct NumericFailure(pub String);

impl std::fmt::Display for NumericFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for NumericFailure {}

#[derive(Parser)]
#[command(
    name = "crlkit",
    version,
    about = "Correlational neural network experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArgs {
    /// Flat key=value config file.
    #[arg(long, short)]
    config: Option<PathBuf>,
    /// Override one config key; repeatable, wins over the file.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Shorthand for --set output.dir=DIR.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
}

impl ConfigArgs {
    fn resolve(&self, extra: Vec<String>) -> Result<ExperimentConfig, ConfigError> {
        let mut overrides = self.set.clone();
        if let Some(out) = &self.out {
            overrides.push(format!("output.dir={}", out.display()));
        }
        overrides.extend(extra);
        ExperimentConfig::resolve(self.config.as_deref(), &overrides)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Train a model; writes model.ckpt, train_log.csv and train.conf.
    Train(ConfigArgs),
    /// Evaluate a checkpoint on the configured test data; writes eval.csv.
    Eval {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Checkpoint to evaluate.
        #[arg(long)]
        model: PathBuf,
        /// Write original / from-left / from-right reconstruction triptychs (PGM) here.
        #[arg(long, value_name = "DIR")]
        dump_recon: Option<PathBuf>,
        /// Number of test images to reconstruct.
        #[arg(long, default_value_t = 10)]
        recon_count: usize,
    },
    /// Train one model per loss-term mask in ablate.masks; writes ablation.csv.
    Ablate(ConfigArgs),
    /// Sum correlation against code width for each model in sweep.models; writes sweep_dims.csv.
    SweepDims {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Comma-separated widths (overrides sweep.dims).
        #[arg(long)]
        dims: Option<String>,
    },
    /// Finite-difference gradient checks over random small problems.
    Gradcheck {
        #[arg(long, default_value_t = 20)]
        cases: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 2.0)]
        lambda: f64,
    },
    /// Tune a match threshold on labelled pairs and score a second pair file.
    Match {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        x_vocab: PathBuf,
        #[arg(long)]
        y_vocab: PathBuf,
        /// Pairs (`x<TAB>y<TAB>label`) used to choose the threshold.
        #[arg(long)]
        tune: PathBuf,
        /// Pairs to score.
        #[arg(long)]
        pairs: PathBuf,
    },
    /// Download MNIST and verify checksums.
    FetchMnist {
        #[arg(long, default_value = "data/mnist")]
        dir: PathBuf,
        #[arg(long, default_value = fetch::DEFAULT_URL)]
        url: String,
        /// Install from an already downloaded package tarball instead.
        #[arg(long)]
        tarball: Option<PathBuf>,
    },
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Train(c) => commands::train(&c.resolve(vec![])?),
        Command::Eval {
            cfg,
            model,
            dump_recon,
            recon_count,
        } => commands::eval(
            &cfg.resolve(vec![])?,
            &model,
            dump_recon.as_deref(),
            recon_count,
        ),
        Command::Ablate(c) => commands::ablate(&c.resolve(vec![])?),
        Command::SweepDims { cfg, dims } => commands::sweep_dims(
            &cfg.resolve(
                dims.map(|d| format!("sweep.dims={d}"))
                    .into_iter()
                    .collect(),
            )?,
        ),
        Command::Gradcheck {
            cases,
            seed,
            lambda,
        } => commands::gradcheck(cases, seed, lambda),
        Command::Match {
            cfg,
            model,
            x_vocab,
            y_vocab,
            tune,
            pairs,
        } => commands::match_pairs(
            &cfg.resolve(vec![])?,
            &commands::MatchArgs {
                model: &model,
                x_vocab: &x_vocab,
                y_vocab: &y_vocab,
                tune: &tune,
                pairs: &pairs,
            },
        ),
        Command::FetchMnist { dir, url, tarball } => fetch::fetch(&dir, &url, tarball.as_deref()),
    }
}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.is::<ConfigError>() {
            return 2;
        }
        if cause.is::<NumericFailure>() {
            return 3;
        }
        if let Some(e) = cause.downcast_ref::<crlkit::Error>() {
            return match e {
                crlkit::Error::NonFinite(_) | crlkit::Error::SingularCovariance { .. } => 3,
                crlkit::Error::Io(io) if io.kind() != std::io::ErrorKind::NotFound => 1,
                _ => 2,
            };
        }
        if let Some(io) = cause.downcast_ref::<std::io::Error>() {
            return if io.kind() == std::io::ErrorKind::NotFound {
                2
            } else {
                1
            };
        }
    }
    1
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
