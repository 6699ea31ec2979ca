//! `hris` command-line driver.
//!
//! Each subcommand loads a JSON [`ExperimentConfig`], applies the flag
//! overrides, runs the experiment and writes CSV. Result rows are flushed
//! after every drop, so an interrupted run leaves the completed drops on disk.
//! Rates in CSV files are always nats/s/Hz; `--rate-unit` only changes the
//! printed table.

use std::ffi::OsString;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use hris_core::channel::draw_drop;
use hris_core::experiments::{csv_writer, run_scheme, run_with_sink, write_csv, RunRecord, SummaryRow};
use hris_core::system_model::user_rate;
use hris_core::units::nats_to_bits;
use hris_core::{ExperimentConfig, RunKind};
use serde::{Deserialize, Serialize};

#[derive(Debug, Parser)]
#[command(name = "hris", version, about = "Max-min rate optimization for hybrid active-passive RIS downlinks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Per-iteration minimum rate of the alternating algorithm.
    Convergence(RunArgs),
    /// Mean minimum rate against the total power budget.
    PtSweep(RunArgs),
    /// Mean minimum rate against the RIS power budget.
    PrisSweep(RunArgs),
    /// One drop, one scheme; prints the final rates and writes the solution.
    SingleRun(RunArgs),
}

#[derive(Debug, Args)]
struct RunArgs {
    /// JSON experiment config.
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    drops: Option<usize>,
    /// Results CSV; defaults to the config's `output`, then `<subcommand>.csv`.
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = RateUnit::Nats)]
    rate_unit: RateUnit,
    /// N = 50 elements and K = 5 users.
    #[arg(long)]
    paper_scale: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum RateUnit {
    Nats,
    Bits,
}

impl RateUnit {
    fn convert(self, nats: f64) -> f64 {
        match self {
            RateUnit::Nats => nats,
            RateUnit::Bits => nats_to_bits(nats),
        }
    }

    fn label(self) -> &'static str {
        match self {
            RateUnit::Nats => "nats/s/Hz",
            RateUnit::Bits => "bits/s/Hz",
        }
    }
}

/// Final point of `single-run`, written next to the results CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Solution {
    pub scheme: String,
    pub p_t_dbm: f64,
    pub p_ris_dbm: f64,
    pub tau_nats: f64,
    pub rates_nats: Vec<f64>,
    /// Per user, `[re, im]` per antenna.
    pub w: Vec<Vec<[f64; 2]>>,
    pub alpha: Vec<[f64; 2]>,
}

/// Runs the CLI and returns its exit status.
pub fn cli_main<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(2) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let (kind, args, name) = match cli.command {
        Command::Convergence(a) => (RunKind::Convergence, a, "convergence"),
        Command::PtSweep(a) => (RunKind::PtSweep, a, "pt-sweep"),
        Command::PrisSweep(a) => (RunKind::PrisSweep, a, "pris-sweep"),
        Command::SingleRun(a) => (RunKind::SingleRun, a, "single-run"),
    };
    let config = load_config(&args)?;
    let output = args
        .output
        .clone()
        .or_else(|| config.output.clone())
        .unwrap_or_else(|| PathBuf::from(format!("{name}.csv")));
    match kind {
        RunKind::SingleRun => single_run(&config, &output, args.rate_unit),
        _ => sweep(&config, kind, &output, args.rate_unit),
    }
}

fn load_config(args: &RunArgs) -> Result<ExperimentConfig> {
    let mut config = ExperimentConfig::load(&args.config)?;
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    if let Some(drops) = args.drops {
        config.num_drops = drops;
    }
    if args.paper_scale {
        config.scenario = config.scenario.paper_scale();
    }
    config.validate()?;
    Ok(config)
}

/// `results.csv` -> `results_<suffix>.<ext>`.
pub fn sibling(path: &Path, suffix: &str, ext: &str) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    path.with_file_name(format!("{stem}_{suffix}.{ext}"))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    Ok(BufWriter::new(
        File::create(path).with_context(|| format!("creating {}", path.display()))?,
    ))
}

fn sweep(config: &ExperimentConfig, kind: RunKind, output: &Path, unit: RateUnit) -> Result<()> {
    let mut rows = csv_writer(create(output)?);
    let trace_path = sibling(output, "trace", "csv");
    let mut trace = match kind {
        RunKind::Convergence => Some(csv_writer(create(&trace_path)?)),
        _ => None,
    };
    let mut sink = |records: &[RunRecord]| -> Result<(), hris_core::ExperimentError> {
        for r in records {
            rows.serialize(&r.row)?;
            if let Some(t) = trace.as_mut() {
                for step in &r.trace {
                    t.serialize(step)?;
                }
            }
        }
        rows.flush()?;
        if let Some(t) = trace.as_mut() {
            t.flush()?;
        }
        Ok(())
    };
    let outcome = run_with_sink(config, kind, &mut sink)?;
    let summary_path = sibling(output, "summary", "csv");
    write_csv(&outcome.summary, create(&summary_path)?)?;

    let failed = outcome.records.iter().filter(|r| r.detail.error.is_some()).count();
    print_summary(&outcome.summary, kind, unit);
    if failed > 0 {
        eprintln!("warning: {failed} runs stopped on a solver failure and report their last accepted iterate");
    }
    println!("results: {}", output.display());
    println!("summary: {}", summary_path.display());
    if kind == RunKind::Convergence {
        println!("trace: {}", trace_path.display());
    }
    Ok(())
}

fn print_summary(summary: &[SummaryRow], kind: RunKind, unit: RateUnit) {
    let axis = match kind {
        RunKind::PrisSweep => "P_RIS [dBm]",
        _ => "P_t [dBm]",
    };
    let width = summary.iter().map(|s| s.scheme.len()).max().unwrap_or(6).max(6);
    println!(
        "{:<width$}  {:>11}  {:>5}  {:>9}  mean min-rate [{}]",
        "scheme",
        axis,
        "drops",
        "converged",
        unit.label()
    );
    for s in summary {
        println!(
            "{:<width$}  {:>11.2}  {:>5}  {:>9}  {:.6}",
            s.scheme,
            s.sweep_dbm,
            s.drops,
            s.converged_runs,
            unit.convert(s.mean_min_rate_nats)
        );
    }
}

fn single_run(config: &ExperimentConfig, output: &Path, unit: RateUnit) -> Result<()> {
    let schemes = config.schemes_for(RunKind::SingleRun);
    let scheme = schemes.first().context("no scheme configured")?;
    if schemes.len() > 1 {
        eprintln!("note: single-run uses only the first scheme, {}", scheme.id());
    }
    let p_t = config.p_t_dbm();
    let p_ris = match scheme {
        hris_core::Scheme::Hybrid { p_ris_dbm: Some(p), .. } | hris_core::Scheme::FullyActive { p_ris_dbm: Some(p) } => *p,
        _ => config.p_ris_dbm_for(RunKind::SingleRun),
    };
    let base = config.scenario.scenario(&hris_core::Scheme::Passive, p_t, p_ris)?;
    let (_, channels) = draw_drop(&base, config.seed, 0)?;
    let (scenario, outcome) = run_scheme(config, scheme, p_t, p_ris, &channels, 0)?;
    let rates = user_rate(&channels, &outcome.w, &outcome.alpha, &scenario);

    let row = hris_core::ResultRow {
        scheme: scheme.id(),
        sweep_dbm: p_t,
        drop: 0,
        min_rate_nats: outcome.tau,
        iterations: outcome.iterations,
        converged: outcome.converged && outcome.error.is_none(),
    };
    write_csv(&[row], create(output)?)?;
    let trace_path = sibling(output, "trace", "csv");
    let trace: Vec<_> = outcome
        .trace
        .iter()
        .map(|t| hris_core::experiments::TraceRow {
            scheme: scheme.id(),
            sweep_dbm: p_t,
            drop: 0,
            iteration: t.iteration,
            tau_nats: t.tau,
            max_violation: t.residuals.max(),
        })
        .collect();
    write_csv(&trace, create(&trace_path)?)?;
    let solution = Solution {
        scheme: scheme.id(),
        p_t_dbm: p_t,
        p_ris_dbm: p_ris,
        tau_nats: outcome.tau,
        rates_nats: rates.clone(),
        w: outcome
            .w
            .w
            .iter()
            .map(|wk| wk.iter().map(|c| [c.re, c.im]).collect())
            .collect(),
        alpha: outcome.alpha.alpha.iter().map(|c| [c.re, c.im]).collect(),
    };
    let solution_path = sibling(output, "solution", "json");
    let mut f = create(&solution_path)?;
    serde_json::to_writer_pretty(&mut f, &solution)?;
    writeln!(f)?;
    f.flush()?;

    println!("scheme: {}  P_t = {p_t} dBm  P_RIS = {p_ris} dBm  seed = {}", scheme.id(), config.seed);
    println!(
        "iterations: {}  converged: {}  rejected steps: {}",
        outcome.iterations, outcome.converged, outcome.rejected_steps
    );
    if let Some(e) = &outcome.error {
        eprintln!("warning: stopped early: {e}");
    }
    for (k, r) in rates.iter().enumerate() {
        println!("user {k}: {:.9} {}", unit.convert(*r), unit.label());
    }
    println!("tau: {:.12} {}", unit.convert(outcome.tau), unit.label());
    println!("results: {}", output.display());
    println!("solution: {}", solution_path.display());
    Ok(())
}
