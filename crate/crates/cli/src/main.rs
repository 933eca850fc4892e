//! Command-line entry point: synthesis, evaluation, audit, and reporting
//! over a shared run configuration.

mod commands;
mod config;

use std::path::PathBuf;

use anyhow::Result;
use clap::{Parser, Subcommand};

use config::RunConfig;

#[derive(Parser)]
#[command(
    name = "convbench",
    about = "Synthesize fact-grounded multi-turn retrieval conversations and evaluate \
             retrieval, generation, and conversation quality."
)]
struct Cli {
    /// TOML run configuration.
    #[arg(long, global = true, default_value = "convbench.toml")]
    config: PathBuf,
    /// Use the deterministic fixture-backed mock provider (no network).
    #[arg(long, global = true)]
    mock: bool,
    /// Seed recorded into reports; mock runs with equal seeds are
    /// byte-identical.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Comma-separated strategy list override.
    #[arg(long, global = true, value_delimiter = ',')]
    strategies: Option<Vec<String>>,
    /// Comma-separated retriever list override.
    #[arg(long, global = true, value_delimiter = ',')]
    retrievers: Option<Vec<String>>,
    /// Ranking depth override.
    #[arg(long, global = true)]
    k: Option<usize>,
    /// Output directory override.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Generate conversations and qrels from source records.
    Synthesize,
    /// Execute retrieval runs and compute metrics, statistics, and analyses.
    EvalRetrieval,
    /// Generate and judge answers under oracle/retrieved/no-retrieval modes.
    EvalGeneration,
    /// Score conversation quality and classify turn dependencies/patterns.
    Audit,
    /// Dataset statistics (conversations, turns, aspects, documents).
    Stats,
    /// Consolidated summary of all artifacts in the output directory.
    Report,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Synthesize => "synthesize",
            Command::EvalRetrieval => "eval-retrieval",
            Command::EvalGeneration => "eval-generation",
            Command::Audit => "audit",
            Command::Stats => "stats",
            Command::Report => "report",
        }
    }
}

fn load_config(cli: &Cli) -> Result<RunConfig> {
    let mut config = if cli.config.exists() {
        RunConfig::load(&cli.config)?
    } else {
        let mut c = RunConfig::default();
        c.apply_env();
        c
    };
    if cli.mock {
        config.run.mock = true;
    }
    if let Some(seed) = cli.seed {
        config.run.seed = seed;
    }
    if let Some(strategies) = &cli.strategies {
        config.eval.strategies = strategies.clone();
    }
    if let Some(retrievers) = &cli.retrievers {
        config.eval.retrievers = retrievers.clone();
    }
    if let Some(k) = cli.k {
        config.eval.k = k;
    }
    if let Some(out) = &cli.out {
        config.paths.out_dir = out.clone();
    }
    Ok(config)
}

fn dispatch(command: Command, config: &RunConfig) -> Result<()> {
    match command {
        Command::Synthesize => commands::synthesize(config),
        Command::EvalRetrieval => commands::eval_retrieval(config),
        Command::EvalGeneration => commands::eval_generation(config),
        Command::Audit => commands::audit(config),
        Command::Stats => commands::stats(config),
        Command::Report => commands::report(config),
    }
}

fn main() {
    let cli = Cli::parse();
    let config = match load_config(&cli) {
        Ok(config) => config,
        Err(e) => {
            eprintln!("error: {e:#}");
            std::process::exit(2);
        }
    };
    if let Err(e) = dispatch(cli.command, &config) {
        let log = serde_json::json!({
            "command": cli.command.name(),
            "error": format!("{e:#}"),
        });
        let _ = std::fs::create_dir_all(&config.paths.out_dir);
        let _ = std::fs::write(
            config.paths.out_dir.join("error.json"),
            serde_json::to_string_pretty(&log).unwrap_or_default(),
        );
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
