//! Command-line front end: `run` executes every (seed, algorithm) cell of
//! an experiment config, `verify` audits solver invariants on the
//! configured instances, `topology dump` prints a built-in network.

use anyhow::{Context, Result};
use cec_cli::config::{Algorithm, ExperimentConfig};
use cec_cli::{files, runner, verify};
use cec_core::{load_named_topology, NamedTopology};
use clap::{Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "cec", version, about = "Joint workload allocation and routing experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a TOML config.
    Run {
        config: PathBuf,
        /// Override the output directory.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Override the seed list, comma separated.
        #[arg(long, value_delimiter = ',')]
        seeds: Option<Vec<u64>>,
        /// Override the algorithm list, comma separated.
        #[arg(long, value_delimiter = ',')]
        algos: Option<Vec<Algorithm>>,
        /// Also render an SVG chart next to each trace CSV.
        #[arg(long)]
        svg: bool,
    },
    /// Inspect built-in topologies.
    Topology {
        #[command(subcommand)]
        action: TopologyAction,
    },
    /// Audit solver invariants on the config's instances.
    Verify { config: PathBuf },
}

#[derive(Subcommand)]
enum TopologyAction {
    /// Print a built-in topology in the plain-text format.
    Dump { name: String },
}

fn load_config(path: &PathBuf) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading config {}", path.display()))?;
    ExperimentConfig::from_toml(&text).with_context(|| format!("in config {}", path.display()))
}

fn cmd_run(
    config: PathBuf,
    out: Option<PathBuf>,
    seeds: Option<Vec<u64>>,
    algos: Option<Vec<Algorithm>>,
    svg: bool,
) -> Result<ExitCode> {
    let mut cfg = load_config(&config)?;
    if let Some(out) = out {
        cfg.run.output_dir = out;
    }
    if let Some(seeds) = seeds {
        cfg.run.seeds = seeds;
    }
    if let Some(algos) = algos {
        cfg.run.algorithms = algos;
    }
    if svg {
        cfg.run.svg = true;
    }
    cfg.validate().context("after command-line overrides")?;

    let out_dir = cfg.run.output_dir.clone();
    let report = runner::run_experiment(&cfg, &out_dir)?;
    println!(
        "{} of {} cells completed; artifacts in {}",
        report.summary.len(),
        report.summary.len() + report.failures.len(),
        out_dir.display()
    );
    for (seed, algo, msg) in &report.failures {
        eprintln!("failed: seed {seed} {algo}: {msg}");
    }
    Ok(if report.all_completed() { ExitCode::SUCCESS } else { ExitCode::FAILURE })
}

fn cmd_topology_dump(name: &str) -> Result<ExitCode> {
    let named = NamedTopology::from_name(name)?;
    print!("{}", files::topology_to_string(&load_named_topology(named)));
    Ok(ExitCode::SUCCESS)
}

fn cmd_verify(config: PathBuf) -> Result<ExitCode> {
    let cfg = load_config(&config)?;
    let mut stdout = std::io::stdout().lock();
    let outcome = verify::verify(&cfg, &mut stdout)?;
    println!("{} passed, {} failed", outcome.passed, outcome.failed);
    Ok(if outcome.all_passed() { ExitCode::SUCCESS } else { ExitCode::FAILURE })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run { config, out, seeds, algos, svg } => cmd_run(config, out, seeds, algos, svg),
        Command::Topology { action: TopologyAction::Dump { name } } => cmd_topology_dump(&name),
        Command::Verify { config } => cmd_verify(config),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
