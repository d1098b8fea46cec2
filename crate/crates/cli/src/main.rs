mod commands;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};
use noisy_billiards::RunConfig;
use serde_json::json;

use crate::output::Outputs;

#[derive(Parser)]
#[command(
    name = "billiards",
    version,
    about = "Noisy billiard chains and their energy-exchange limit"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct Common {
    /// TOML run configuration
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Overrides `seed` from the configuration
    #[arg(long, global = true, value_name = "U64")]
    seed: Option<u64>,
    /// Overrides `replicas` from the configuration
    #[arg(long, global = true, value_name = "N")]
    replicas: Option<u64>,
    /// Worker threads for replica-parallel work (default: all cores)
    #[arg(long, global = true, value_name = "N")]
    threads: Option<usize>,
    /// Output directory
    #[arg(long, global = true, value_name = "DIR", default_value = ".")]
    out: PathBuf,
}

#[derive(Subcommand, Clone, Copy, Debug)]
enum Command {
    /// Simulate the chain: energy paths and collision logs per replica
    Simulate,
    /// Law of the limiting exchange process at each configured time
    Limit,
    /// TV distance between simulated and limiting laws along the overlap ladder
    Compare {
        /// Compare against Gillespie samples instead of the solved chain
        #[arg(long)]
        gillespie: bool,
    },
    /// Single-particle transition kernel on a grid
    Kernel,
    /// Doeblin constants and mixing decay of the single-particle dynamics
    Doeblin,
    /// First-collision rates of a two-particle chain
    Rates,
    /// Recollision fractions for two-particle chains
    Recollisions,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::Limit => "limit",
            Command::Compare { .. } => "compare",
            Command::Kernel => "kernel",
            Command::Doeblin => "doeblin",
            Command::Rates => "rates",
            Command::Recollisions => "recollisions",
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] noisy_billiards::Error),
    #[error("{0}")]
    Usage(String),
    #[error("internal error: {0}")]
    Internal(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Core(noisy_billiards::Error::Config { .. }) | CliError::Usage(_) => 2,
            CliError::Core(e) if e.is_numerical() => 3,
            _ => 1,
        }
    }
}

fn load_config(common: &Common) -> Result<RunConfig, CliError> {
    let path = common
        .config
        .as_ref()
        .ok_or_else(|| CliError::Usage("--config PATH is required".into()))?;
    let mut config = RunConfig::from_path(path)?;
    if let Some(seed) = common.seed {
        config.system.seed = seed;
    }
    if let Some(replicas) = common.replicas {
        if replicas == 0 {
            return Err(
                noisy_billiards::Error::config("replicas", "must be positive, got 0").into(),
            );
        }
        config.system.replicas = replicas;
    }
    Ok(config)
}

fn execute(cli: &Cli) -> Result<(), CliError> {
    let config = load_config(&cli.common)?;
    if let Some(threads) = cli.common.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| CliError::Internal(e.to_string()))?;
    }
    let started = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs_f64())
        .unwrap_or(0.0);
    let clock = Instant::now();
    let mut outputs = Outputs::new(&cli.common.out)?;
    let summary = match commands::run(cli.command, &config, &mut outputs) {
        Ok(summary) => summary,
        Err(e) => {
            outputs.discard();
            return Err(e);
        }
    };
    let manifest = json!({
        "tool": "billiards",
        "version": env!("CARGO_PKG_VERSION"),
        "command": cli.command.name(),
        "seed": config.system.seed,
        "replicas": config.system.replicas,
        "threads": rayon::current_num_threads(),
        "config": config,
        "config_toml": config.to_toml_string(),
        "summary": summary,
        "started_unix_s": started,
        "elapsed_s": clock.elapsed().as_secs_f64(),
    });
    outputs.finish(manifest)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
