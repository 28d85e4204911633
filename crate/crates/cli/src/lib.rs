//! `crsn` command-line driver: single runs, node-count sweeps and the
//! formula check table.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use crsn_core::model::validate_scenario;
use crsn_core::sweep::{run_sweep, MeanRow, SweepSpec};
use crsn_core::verify::{run_suite, SuiteParams};
use crsn_core::{run, ConfigError, ProtocolVariant, ScenarioConfig, SummaryRow};

pub const EXIT_OK: u8 = 0;
/// Invalid configuration or a failed run.
pub const EXIT_FAILURE: u8 = 1;
/// Config file missing or unreadable.
pub const EXIT_UNREADABLE: u8 = 2;

pub const TRACE_FILE: &str = "trace.jsonl";
pub const SUMMARY_FILE: &str = "summary.csv";
pub const MEANS_FILE: &str = "means.csv";

#[derive(Debug, Parser)]
#[command(name = "crsn", version, about = "Trust-aware CRSN routing simulator")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one scenario and write its trace and summary row.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Overrides `scenario.rng_seed`.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Run node counts x seeds x variants and write per-run and mean tables.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_delimiter = ',', default_values_t = SweepSpec::default().node_counts)]
        nodes: Vec<usize>,
        #[arg(long, value_delimiter = ',', default_values_t = SweepSpec::default().seeds)]
        seeds: Vec<u64>,
        #[arg(long, value_delimiter = ',', default_values_t = SweepSpec::default().variants)]
        variants: Vec<ProtocolVariant>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Check every worked formula example and print the table.
    Verify {
        /// Channel switching delay per step in seconds, for sensitivity checks.
        #[arg(long, default_value_t = SuiteParams::default().switch_step_delay)]
        switch_step_delay: f64,
    },
}

/// Runs a parsed command. Diagnostics go to `err`, tables to `out`.
pub fn execute(cli: Cli, out: &mut dyn Write, err: &mut dyn Write) -> u8 {
    let result = match cli.command {
        Command::Run { config, seed, out: dir } => cmd_run(&config, seed, &dir, out),
        Command::Sweep {
            config,
            nodes,
            seeds,
            variants,
            out: dir,
        } => {
            let spec = SweepSpec {
                node_counts: nodes,
                seeds,
                variants,
            };
            cmd_sweep(&config, &spec, &dir, out)
        }
        Command::Verify { switch_step_delay } => cmd_verify(&SuiteParams { switch_step_delay }, out),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {}", e.message);
            e.code
        }
    }
}

#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    fn failure(message: impl Into<String>) -> Self {
        CliError {
            code: EXIT_FAILURE,
            message: message.into(),
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        let code = match e {
            ConfigError::Io { .. } => EXIT_UNREADABLE,
            ConfigError::Parse(_) => EXIT_FAILURE,
        };
        CliError {
            code,
            message: e.to_string(),
        }
    }
}

fn io_error(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::failure(format!("{}: {e}", path.display()))
}

/// Loads a config and rejects it with every violation listed.
pub fn load_config(path: &Path) -> Result<ScenarioConfig, CliError> {
    let cfg = ScenarioConfig::load(path)?;
    check(&cfg)?;
    Ok(cfg)
}

fn check(cfg: &ScenarioConfig) -> Result<(), CliError> {
    let violations = validate_scenario(cfg);
    if violations.is_empty() {
        return Ok(());
    }
    let list: Vec<String> = violations.iter().map(ToString::to_string).collect();
    Err(CliError::failure(format!("invalid config: {}", list.join("; "))))
}

fn create_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| io_error(dir, e))
}

fn write_table<const N: usize>(path: &Path, header: [&str; N], rows: impl IntoIterator<Item = [String; N]>) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| io_error(path, e))?;
    w.write_record(header).map_err(|e| io_error(path, e))?;
    for row in rows {
        w.write_record(&row).map_err(|e| io_error(path, e))?;
    }
    w.flush().map_err(|e| io_error(path, e))
}

pub fn cmd_run(config: &Path, seed: Option<u64>, dir: &Path, out: &mut dyn Write) -> Result<u8, CliError> {
    let mut cfg = ScenarioConfig::load(config)?;
    if let Some(seed) = seed {
        cfg = cfg.with_seed(seed);
    }
    check(&cfg)?;
    let result = run(&cfg).map_err(|e| CliError::failure(e.to_string()))?;
    create_dir(dir)?;
    let trace_path = dir.join(TRACE_FILE);
    let file = fs::File::create(&trace_path).map_err(|e| io_error(&trace_path, e))?;
    result
        .trace
        .write_jsonl(io::BufWriter::new(file))
        .map_err(|e| io_error(&trace_path, e))?;
    let row = SummaryRow::from_metrics(
        cfg.scenario.variant,
        cfg.scenario.node_count,
        cfg.scenario.rng_seed,
        &result.metrics,
    );
    write_table(&dir.join(SUMMARY_FILE), SummaryRow::HEADER, [row.fields()])?;
    let m = &result.metrics;
    let _ = writeln!(
        out,
        "{} nodes, seed {}, {}: generated {}, delivered {}, dropped {}, in flight {}; trace {}",
        cfg.scenario.node_count,
        cfg.scenario.rng_seed,
        cfg.scenario.variant,
        m.generated_count,
        m.delivered_count,
        m.dropped_count,
        m.in_flight_at_end,
        &result.trace.hash_hex()[..16]
    );
    Ok(EXIT_OK)
}

pub fn cmd_sweep(config: &Path, spec: &SweepSpec, dir: &Path, out: &mut dyn Write) -> Result<u8, CliError> {
    let empty = spec.empty_fields();
    if !empty.is_empty() {
        return Err(CliError::failure(format!("empty sweep list: {}", empty.join(", "))));
    }
    let base = load_config(config)?;
    let result = run_sweep(&base, spec);
    create_dir(dir)?;
    write_table(&dir.join(SUMMARY_FILE), SummaryRow::HEADER, result.rows.iter().map(SummaryRow::fields))?;
    write_table(&dir.join(MEANS_FILE), MeanRow::HEADER, result.means.iter().map(MeanRow::fields))?;
    let failed: Vec<&SummaryRow> = result.failed_rows().collect();
    let _ = writeln!(
        out,
        "{} runs, {} failed; tables in {}",
        result.rows.len(),
        failed.len(),
        dir.display()
    );
    for row in &failed {
        let _ = writeln!(out, "  {} n={} seed={}: {}", row.variant, row.node_count, row.seed, row.status);
    }
    Ok(if failed.is_empty() { EXIT_OK } else { EXIT_FAILURE })
}

pub fn cmd_verify(params: &SuiteParams, out: &mut dyn Write) -> Result<u8, CliError> {
    let checks = run_suite(params);
    let width = checks.iter().map(|c| c.formula.len()).max().unwrap_or(0);
    let case_width = checks.iter().map(|c| c.case.len()).max().unwrap_or(0);
    let mut failed = 0;
    for c in &checks {
        let status = if c.passed() { "pass" } else { "FAIL" };
        if !c.passed() {
            failed += 1;
        }
        let _ = writeln!(
            out,
            "{status}  {:width$}  {:case_width$}  expected {}  got {}",
            c.formula,
            c.case,
            c.expected(),
            c.actual()
        );
    }
    let _ = writeln!(out, "{} of {} checks passed", checks.len() - failed, checks.len());
    Ok(if failed == 0 { EXIT_OK } else { EXIT_FAILURE })
}
