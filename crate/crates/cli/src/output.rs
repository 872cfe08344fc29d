//! Report and table emission. `report.json` and the CSVs are pure
//! functions of the config and seed; wall-clock information is isolated
//! in `meta.json` so reports stay byte-comparable across runs.

use std::fs;
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{Context, Result};
use serde::Serialize;

use crate::config::ExperimentConfig;

/// What a suite run produces.
pub struct RunOutput {
    /// Structured results embedded in `report.json`.
    pub results: serde_json::Value,
    /// `(quantity, value)` rows for `summary.csv`, in emission order.
    pub summary: Vec<(String, f64)>,
    /// Named CSV tables written under `tables/`.
    pub tables: Vec<Table>,
    /// A verdict-style failure: exit code 2 instead of 0.
    pub flagged: bool,
}

pub struct Table {
    /// File stem under `tables/`.
    pub name: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(name: &str, header: &[&str]) -> Table {
        Table {
            name: name.to_string(),
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }
}

/// Shorthand for building CSV cells.
pub fn cell<T: std::fmt::Display>(v: T) -> String {
    v.to_string()
}

#[derive(Serialize)]
struct Report<'a> {
    command: &'a str,
    seed: u64,
    flagged: bool,
    /// Effective configuration as TOML; parsing it reproduces the run.
    config_echo: &'a str,
    results: &'a serde_json::Value,
}

pub fn write_outputs(
    out_dir: &Path,
    command: &str,
    cfg: &ExperimentConfig,
    output: &RunOutput,
) -> Result<()> {
    fs::create_dir_all(out_dir)
        .with_context(|| format!("creating output directory {}", out_dir.display()))?;
    let echo = toml::to_string_pretty(cfg).context("serializing the config echo")?;
    let report = Report {
        command,
        seed: cfg.seed,
        flagged: output.flagged,
        config_echo: &echo,
        results: &output.results,
    };
    let json = serde_json::to_string_pretty(&report).context("serializing report.json")?;
    fs::write(out_dir.join("report.json"), json.as_bytes())
        .with_context(|| format!("writing {}", out_dir.join("report.json").display()))?;

    let mut summary = String::from("quantity,value\n");
    for (name, value) in &output.summary {
        summary.push_str(name);
        summary.push(',');
        summary.push_str(&value.to_string());
        summary.push('\n');
    }
    fs::write(out_dir.join("summary.csv"), summary.as_bytes())
        .context("writing summary.csv")?;

    let tables_dir = out_dir.join("tables");
    fs::create_dir_all(&tables_dir).context("creating tables directory")?;
    for table in &output.tables {
        let mut text = table.header.join(",");
        text.push('\n');
        for row in &table.rows {
            text.push_str(&row.join(","));
            text.push('\n');
        }
        let path = tables_dir.join(format!("{}.csv", table.name));
        fs::write(&path, text.as_bytes())
            .with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(())
}

#[derive(Serialize)]
struct Meta<'a> {
    command: &'a str,
    started_unix_seconds: u64,
    elapsed_seconds: f64,
    version: &'a str,
}

pub fn write_meta(out_dir: &Path, command: &str, started: SystemTime) -> Result<()> {
    let started_unix = started
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    let elapsed = started.elapsed().map(|d| d.as_secs_f64()).unwrap_or(0.0);
    let meta = Meta {
        command,
        started_unix_seconds: started_unix,
        elapsed_seconds: elapsed,
        version: env!("CARGO_PKG_VERSION"),
    };
    let json = serde_json::to_string_pretty(&meta).context("serializing meta.json")?;
    fs::write(out_dir.join("meta.json"), json.as_bytes()).context("writing meta.json")?;
    Ok(())
}
