//! Command-line surface for the docking pipeline.
//!
//! Subcommands: `decoys`, `train-potential`, `equilibrate`, `sample`,
//! `score`, `metrics`. All pipeline commands are driven by one TOML config
//! (see README for the schema); `--seed`, `--jobs`, and `--out` override
//! the config, as do the `MULTIDOCK_SEED` / `MULTIDOCK_JOBS` /
//! `MULTIDOCK_OUT` environment variables (flag > env > config).
//!
//! Exit codes: 0 success, 2 config or validation error, 3 numerical
//! failure, 4 partial batch failure.

mod commands;
mod config;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use config::RunConfig;

#[derive(Debug)]
pub enum CliError {
    /// Configuration, schema, or input validation problem (exit 2).
    Config(String),
    /// Numerical failure inside a computation (exit 3).
    Numerical(String),
    /// Some batch items failed but output was produced (exit 4).
    PartialBatch(String),
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "{m}"),
            CliError::Numerical(m) => write!(f, "numerical failure: {m}"),
            CliError::PartialBatch(m) => write!(f, "partial batch failure: {m}"),
        }
    }
}

impl From<multidock::Error> for CliError {
    fn from(e: multidock::Error) -> Self {
        match e {
            multidock::Error::Numerical(m) => CliError::Numerical(m),
            other => CliError::Config(other.to_string()),
        }
    }
}

impl CliError {
    fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numerical(_) => 3,
            CliError::PartialBatch(_) => 4,
        }
    }
}

#[derive(Parser)]
#[command(
    name = "multidock",
    about = "Rigid multimeric docking: gradient-play equilibria and diffusion sampling over chain roto-translations",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML run configuration (format v1).
    #[arg(long)]
    config: PathBuf,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Caps worker threads (default: logical cores).
    #[arg(long)]
    jobs: Option<usize>,
    /// Overrides the config output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate and score random decoys of the input assembly.
    Decoys(Common),
    /// Train the surrogate potential on a scored decoy file.
    TrainPotential(Common),
    /// Compute equilibria by multi-start simultaneous gradient play.
    Equilibrate(Common),
    /// Sample equilibria by reverse diffusion with the exact oracle.
    Sample(Common),
    /// Evaluate the selected potential (assembly and optional decoy file).
    Score(Common),
    /// C-RMSD and TM-score of predictions against a reference assembly.
    Metrics {
        /// Predicted assembly JSON files.
        #[arg(long, required = true, num_args = 1..)]
        pred: Vec<PathBuf>,
        /// Reference assembly JSON file.
        #[arg(long)]
        truth: PathBuf,
        /// Output directory for metrics.csv.
        #[arg(long, default_value = "out")]
        out: PathBuf,
        #[arg(long)]
        jobs: Option<usize>,
    },
}

fn env_u64(name: &str) -> Result<Option<u64>, CliError> {
    match std::env::var(name) {
        Ok(v) => v
            .parse::<u64>()
            .map(Some)
            .map_err(|_| CliError::Config(format!("{name}='{v}' is not an unsigned integer"))),
        Err(_) => Ok(None),
    }
}

struct Resolved {
    cfg: RunConfig,
    seed: u64,
    out: PathBuf,
}

fn resolve(common: &Common) -> Result<Resolved, CliError> {
    let cfg = RunConfig::load(&common.config)?;
    cfg.validate()?;

    let seed = common
        .seed
        .or(env_u64("MULTIDOCK_SEED")?)
        .or(cfg.seed)
        .ok_or_else(|| {
            CliError::Config(
                "seed is mandatory: set it in the config, MULTIDOCK_SEED, or --seed".into(),
            )
        })?;

    let jobs = match common.jobs {
        Some(j) => Some(j),
        None => env_u64("MULTIDOCK_JOBS")?.map(|j| j as usize),
    };
    if let Some(j) = jobs {
        if j == 0 {
            return Err(CliError::Config("--jobs must be >= 1".into()));
        }
        multidock::exec::configure_threads(j);
    }

    let out = common
        .out
        .clone()
        .or_else(|| std::env::var("MULTIDOCK_OUT").ok().map(PathBuf::from))
        .unwrap_or_else(|| cfg.output.dir.clone());

    Ok(Resolved { cfg, seed, out })
}

fn run() -> Result<(), CliError> {
    let cli = Cli::parse();
    match &cli.command {
        Command::Decoys(c) => {
            let r = resolve(c)?;
            commands::cmd_decoys(&r.cfg, r.seed, &r.out)
        }
        Command::TrainPotential(c) => {
            let r = resolve(c)?;
            commands::cmd_train_potential(&r.cfg, r.seed, &r.out)
        }
        Command::Equilibrate(c) => {
            let r = resolve(c)?;
            commands::cmd_equilibrate(&r.cfg, r.seed, &r.out)
        }
        Command::Sample(c) => {
            let r = resolve(c)?;
            commands::cmd_sample(&r.cfg, r.seed, &r.out)
        }
        Command::Score(c) => {
            let r = resolve(c)?;
            commands::cmd_score(&r.cfg, &r.out)
        }
        Command::Metrics {
            pred,
            truth,
            out,
            jobs,
        } => {
            if let Some(j) = jobs {
                multidock::exec::configure_threads(*j);
            }
            commands::cmd_metrics(pred, truth, out)
        }
    }
}

fn main() {
    if let Err(e) = run() {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
