//! Command-line front end: each subcommand reads an experiment config,
//! runs one measurement suite, and writes a report directory. Exit code
//! 0 means clean, 2 means a suite raised a flag, 1 means the run itself
//! failed.

mod config;
mod output;
mod suites;

use std::path::{Path, PathBuf};
use std::time::SystemTime;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

use config::{ExperimentConfig, SuiteName};
use output::{write_meta, write_outputs};
use suites::{build_ctx, run_suite, run_sweep, suite_name};

#[derive(Parser)]
#[command(
    name = "sgcalc",
    version,
    about = "Semigroup calculus measurements on weighted graphs"
)]
struct Cli {
    /// Experiment description (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (overrides the config).
    #[arg(long, global = true)]
    out: Option<String>,
    /// Random seed (overrides the config).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Sweep levels, comma separated (overrides the config).
    #[arg(long, global = true, value_delimiter = ',')]
    levels: Vec<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Doubling, comparability, and local Poincare measurements.
    Geometry,
    /// Semigroup identities and dual-route agreement.
    Semigroup,
    /// Oscillation norms over the scale grid.
    Bmo,
    /// Band-energy Carleson measures against oscillation norms.
    Carleson,
    /// Paraproduct norm estimates and quadrature health.
    Paraproduct,
    /// Muckenhoupt and reverse Holder characteristics.
    Weights,
    /// Kernel hypothesis tables and the testing-condition verdict.
    #[command(name = "t1-check")]
    T1Check,
    /// Rerun suites across refinement levels and compare.
    Sweep,
}

impl Command {
    fn suite(self) -> Option<SuiteName> {
        match self {
            Command::Geometry => Some(SuiteName::Geometry),
            Command::Semigroup => Some(SuiteName::Semigroup),
            Command::Bmo => Some(SuiteName::Bmo),
            Command::Carleson => Some(SuiteName::Carleson),
            Command::Paraproduct => Some(SuiteName::Paraproduct),
            Command::Weights => Some(SuiteName::Weights),
            Command::T1Check => Some(SuiteName::T1Check),
            Command::Sweep => None,
        }
    }

    fn name(self) -> &'static str {
        match self.suite() {
            Some(s) => suite_name(s),
            None => "sweep",
        }
    }
}

fn run() -> Result<i32> {
    let started = SystemTime::now();
    let cli = Cli::parse();
    let path = cli
        .config
        .as_ref()
        .context("--config <experiment.toml> is required")?;
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading config {}", path.display()))?;
    let mut cfg: ExperimentConfig =
        toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if !cli.levels.is_empty() {
        cfg.sweep.get_or_insert_with(Default::default).levels = cli.levels.clone();
    }
    let out_dir = cli.out.clone().unwrap_or_else(|| cfg.output_dir.clone());
    let out_dir = Path::new(&out_dir);

    let command = cli.command;
    let output = match command.suite() {
        Some(suite) => {
            let ctx = build_ctx(&cfg)?;
            run_suite(suite, &cfg, &ctx)?
        }
        None => run_sweep(&cfg)?,
    };

    write_outputs(out_dir, command.name(), &cfg, &output)?;
    write_meta(out_dir, command.name(), started)?;

    for (name, value) in &output.summary {
        println!("{name} = {value}");
    }
    println!(
        "{}: {} ({})",
        command.name(),
        if output.flagged { "flagged" } else { "ok" },
        out_dir.display()
    );
    Ok(if output.flagged { 2 } else { 0 })
}

fn main() {
    match run() {
        Ok(code) => std::process::exit(code),
        Err(err) => {
            eprintln!("error: {err:#}");
            std::process::exit(1);
        }
    }
}
