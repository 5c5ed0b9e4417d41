//! Experiment runner behind the `diamond` binary.

pub mod commands;
pub mod config;

use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde_json::json;

pub use config::ExperimentConfig;

#[derive(Debug)]
pub enum CliError {
    /// unreadable or invalid configuration
    Config(String),
    Run(String),
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "config error: {m}"),
            CliError::Run(m) => write!(f, "{m}"),
        }
    }
}

pub const EXIT_OK: i32 = 0;
pub const EXIT_RUN: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_ORACLE: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "diamond", version, about = "Directed polymers on diamond hierarchical graphs")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// TOML experiment file; every field has a default
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// overrides `seed` from the config
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// worker threads (0 = one per core)
    #[arg(long, global = true, env = "DIAMOND_THREADS", default_value_t = 0)]
    pub threads: usize,
    /// output directory, created if missing
    #[arg(long, global = true, default_value = ".")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// R, R' and higher limit moments on an r grid
    Limits,
    /// critical β schedule, exact inversion next to the series
    Beta,
    /// Monte Carlo draws of the partition function
    Simulate,
    /// exact finite-n centered moments
    Moments,
    /// Wasserstein distances between samples, or the convergence probe
    Converge,
    /// exact small-graph identities; exit 3 on any failure
    Oracle,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Limits => "limits",
            Command::Beta => "beta",
            Command::Simulate => "simulate",
            Command::Moments => "moments",
            Command::Converge => "converge",
            Command::Oracle => "oracle",
        }
    }
}

pub fn load_config(path: Option<&Path>, seed: Option<u64>) -> Result<ExperimentConfig, CliError> {
    let text = match path {
        Some(p) => std::fs::read_to_string(p).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?,
        None => String::new(),
    };
    let mut cfg = ExperimentConfig::parse(&text).map_err(CliError::Config)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

/// Runs one subcommand and writes `<command>.manifest.json`; returns the exit code.
pub fn run(cli: &Cli) -> i32 {
    match execute(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("diamond: {e}");
            match e {
                CliError::Config(_) => EXIT_CONFIG,
                CliError::Run(_) => EXIT_RUN,
            }
        }
    }
}

fn execute(cli: &Cli) -> Result<i32, CliError> {
    let cfg = load_config(cli.config.as_deref(), cli.seed)?;
    if cli.threads > 0 {
        // a second call in the same process keeps the first pool
        let _ = rayon::ThreadPoolBuilder::new().num_threads(cli.threads).build_global();
    }
    std::fs::create_dir_all(&cli.out).map_err(|e| CliError::Run(format!("{}: {e}", cli.out.display())))?;
    let out = cli.out.as_path();
    let outcome = match cli.command {
        Command::Limits => commands::limits(&cfg, out)?,
        Command::Beta => commands::beta(&cfg, out)?,
        Command::Simulate => commands::simulate(&cfg, out)?,
        Command::Moments => commands::moments(&cfg, out)?,
        Command::Converge => commands::converge(&cfg, out)?,
        Command::Oracle => commands::oracle(&cfg, out)?,
    };
    // the resolved config, written so the manifest's rerun line is literal
    let config_name = format!("{}.config.toml", cli.command.name());
    let resolved = toml::to_string(&cfg).map_err(|e| CliError::Run(e.to_string()))?;
    std::fs::write(out.join(&config_name), resolved).map_err(|e| CliError::Run(e.to_string()))?;
    let manifest = json!({
        "tool": "diamond",
        "version": env!("CARGO_PKG_VERSION"),
        "command": cli.command.name(),
        "config": cfg,
        "config_file": config_name,
        "outputs": outcome.files,
        "notes": outcome.notes,
        "rerun": format!("diamond {} --config {config_name}", cli.command.name()),
    });
    let path = out.join(format!("{}.manifest.json", cli.command.name()));
    let text = serde_json::to_string_pretty(&manifest).map_err(|e| CliError::Run(e.to_string()))? + "\n";
    std::fs::write(&path, text).map_err(|e| CliError::Run(format!("{}: {e}", path.display())))?;
    Ok(if outcome.failed { EXIT_ORACLE } else { EXIT_OK })
}
