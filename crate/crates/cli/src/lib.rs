//! Command-line front end: `simulate`, `estimate`, `check` and `config`.

pub mod checks;
pub mod commands;
pub mod config;

use std::path::PathBuf;

use clap::{Parser, Subcommand};

pub use config::RunConfig;

/// Failure of a command, split by exit code.
#[derive(Debug)]
pub enum CliError {
    /// Bad configuration or input data; exit code 2.
    Input(String),
    /// Anything that went wrong while running; exit code 1.
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Input(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Input(m) | CliError::Runtime(m) => f.write_str(m),
        }
    }
}

impl std::error::Error for CliError {}

impl From<dnnate::Error> for CliError {
    fn from(e: dnnate::Error) -> Self {
        if e.is_input_error() {
            CliError::Input(e.to_string())
        } else {
            CliError::Runtime(e.to_string())
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "dnnate",
    version,
    about = "Average treatment effects with neural-network nuisance fits",
    after_long_help = config::keys_help()
)]
pub struct Cli {
    /// Configuration file; keys missing from it keep their defaults.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,

    /// Overrides run.seed.
    #[arg(long, global = true, value_name = "U64")]
    pub seed: Option<u64>,

    /// Overrides run.threads.
    #[arg(long, global = true, value_name = "N")]
    pub threads: Option<usize>,

    /// Overrides run.out.
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,

    /// Overrides run.ci_level.
    #[arg(long = "ci-level", global = true, value_name = "F")]
    pub ci_level: Option<f64>,

    /// Sets any configuration key, e.g. --set dgp.p=5. Repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub set: Vec<String>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run replications of the simulation design and write aggregate, per-replication and density files.
    Simulate,
    /// Estimate the ATE on a CSV file over repeated random splits.
    Estimate {
        /// Overrides data.path.
        #[arg(long, value_name = "PATH")]
        data: Option<PathBuf>,
        /// Overrides estimate.repeats.
        #[arg(long, value_name = "N")]
        repeats: Option<usize>,
        /// Overrides estimate.fractions, comma separated.
        #[arg(long, value_name = "F,...", value_delimiter = ',')]
        fractions: Option<Vec<f64>>,
    },
    /// Run the property and oracle suites and report pass/fail per suite.
    Check {
        /// Run only these suites (comma separated or repeated).
        #[arg(long, value_name = "SUITE", value_delimiter = ',')]
        only: Vec<String>,
        /// Test hook: Adam beta1 used by the adam-golden suite.
        #[arg(long, hide = true)]
        adam_beta1: Option<f64>,
    },
    /// Print the effective configuration document.
    Config,
}

/// Builds the effective configuration: defaults, then the file, then
/// `--set` overrides, then the dedicated flags.
pub fn resolve_config(cli: &Cli) -> Result<RunConfig, CliError> {
    let text = match &cli.config {
        Some(path) => std::fs::read_to_string(path)
            .map_err(|e| CliError::Input(format!("cannot read config {}: {e}", path.display())))?,
        None => String::new(),
    };
    let mut cfg = RunConfig::load(&text, &cli.set)?;
    if let Some(seed) = cli.seed {
        cfg.run.seed = seed;
    }
    if let Some(threads) = cli.threads {
        cfg.run.threads = threads;
    }
    if let Some(out) = &cli.out {
        cfg.run.out = out.to_string_lossy().into_owned();
    }
    if let Some(level) = cli.ci_level {
        cfg.run.ci_level = level;
    }
    if let Command::Estimate {
        data,
        repeats,
        fractions,
    } = &cli.command
    {
        if let Some(path) = data {
            cfg.data.path = path.to_string_lossy().into_owned();
        }
        if let Some(r) = repeats {
            cfg.estimate.repeats = *r;
        }
        if let Some(f) = fractions {
            cfg.estimate.fractions = f.clone();
        }
    }
    Ok(cfg)
}

/// Runs a parsed command line and returns the process exit code.
pub fn run(cli: &Cli) -> Result<u8, CliError> {
    let cfg = resolve_config(cli)?;
    match &cli.command {
        Command::Simulate => {
            cfg.validate_simulate()?;
            let summary = with_threads(cfg.run.threads, || commands::simulate(&cfg))?;
            print!("{summary}");
            Ok(0)
        }
        Command::Estimate { .. } => {
            cfg.validate_estimate()?;
            let text = with_threads(cfg.run.threads, || commands::estimate(&cfg))?;
            print!("{text}");
            Ok(0)
        }
        Command::Check { only, adam_beta1 } => {
            let suites = checks::select(only)?;
            let opts = checks::CheckOptions {
                seed: cfg.run.seed,
                adam_beta1: adam_beta1.unwrap_or(0.9),
            };
            let outcomes = with_threads(cfg.run.threads, || Ok(checks::run(&suites, &opts)))?;
            let mut failed = Vec::new();
            for o in &outcomes {
                println!("{o}");
                if !o.passed {
                    failed.push(o.name);
                }
            }
            if failed.is_empty() {
                Ok(0)
            } else {
                eprintln!("failed: {}", failed.join(", "));
                Ok(1)
            }
        }
        Command::Config => {
            print!("{}", cfg.dump());
            Ok(0)
        }
    }
}

fn with_threads<T: Send>(
    threads: usize,
    f: impl FnOnce() -> Result<T, CliError> + Send,
) -> Result<T, CliError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| CliError::Runtime(format!("thread pool: {e}")))?;
    pool.install(f)
}
