//! Monte Carlo experiments over channel drops: the compared schemes, the
//! fair split of the power budget, power sweeps, convergence traces and CSV
//! output.
//!
//! Every scheme and sweep point of one drop sees the same channel
//! realization and the same initial RIS phases. Drops run in parallel on the
//! rayon pool (`RAYON_NUM_THREADS` sets its size); rows are emitted in drop
//! order so output does not depend on scheduling.

use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::channel::{draw_drop, ChannelError, ChannelSet, FadingModel, Layout, PathLossModel};
use crate::rng::{stream, Purpose};
use crate::sca::{bca_solve, bca_solve_from, conjugate_beamformer, BcaOutcome, ScaError, ScaOptions};
use crate::socp::SolverSettings;
use crate::system_model::{constraint_residuals, ModelError, RisVector, Scenario};
use crate::units::{db_to_linear, dbm_to_mw};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error("cannot read config {path}: {source}")]
    ReadConfig { path: PathBuf, source: std::io::Error },
    #[error("malformed config: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Channel(#[from] ChannelError),
    #[error(transparent)]
    Sca(#[from] ScaError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// RIS deployment being compared. `p_ris_dbm` overrides the run's RIS budget.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Scheme {
    NoRis,
    Passive,
    Hybrid {
        n_active: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        p_ris_dbm: Option<f64>,
    },
    FullyActive {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        p_ris_dbm: Option<f64>,
    },
}

impl Scheme {
    pub fn hybrid(n_active: usize) -> Self {
        Scheme::Hybrid {
            n_active,
            p_ris_dbm: None,
        }
    }

    pub fn fully_active() -> Self {
        Scheme::FullyActive { p_ris_dbm: None }
    }

    /// Label used in CSV output.
    pub fn id(&self) -> String {
        let (base, p) = match self {
            Scheme::NoRis => ("no_ris".to_string(), None),
            Scheme::Passive => ("passive".to_string(), None),
            Scheme::Hybrid { n_active, p_ris_dbm } => (format!("hybrid_na{n_active}"), *p_ris_dbm),
            Scheme::FullyActive { p_ris_dbm } => ("fully_active".to_string(), *p_ris_dbm),
        };
        match p {
            Some(p) => format!("{base}_pris{p}"),
            None => base,
        }
    }

    pub fn n_active(&self, n_ris: usize) -> usize {
        match self {
            Scheme::NoRis | Scheme::Passive => 0,
            Scheme::Hybrid { n_active, .. } => *n_active,
            Scheme::FullyActive { .. } => n_ris,
        }
    }

    /// Whether the scheme draws on the RIS power budget.
    pub fn has_active_elements(&self, n_ris: usize) -> bool {
        self.n_active(n_ris) > 0
    }

    fn p_ris_override(&self) -> Option<f64> {
        match self {
            Scheme::Hybrid { p_ris_dbm, .. } | Scheme::FullyActive { p_ris_dbm } => *p_ris_dbm,
            _ => None,
        }
    }
}

/// BS budget in mW: the full `P_t` for schemes without active elements,
/// otherwise `P_t - P_RIS` so both together stay within `P_t`.
pub fn effective_bs_budget(
    scheme: &Scheme,
    n_ris: usize,
    p_t_dbm: f64,
    p_ris_dbm: f64,
) -> Result<f64, ExperimentError> {
    let p_t = dbm_to_mw(p_t_dbm);
    if !scheme.has_active_elements(n_ris) {
        return Ok(p_t);
    }
    let budget = p_t - dbm_to_mw(p_ris_dbm);
    // Tolerate round-off when P_t and P_RIS are given equal.
    if budget < -1e-12 * p_t {
        return Err(ExperimentError::Config(format!(
            "{}: RIS budget {p_ris_dbm} dBm exceeds the total budget {p_t_dbm} dBm",
            scheme.id()
        )));
    }
    Ok(budget.max(0.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioConfig {
    pub n_tx: usize,
    pub n_users: usize,
    pub n_ris: usize,
    pub a_max: f64,
    pub noise_dbm: f64,
    /// Active-element noise figure; `sigma_r^2 = (eta + 1) sigma_u^2`.
    pub eta_db: f64,
    pub layout: Layout,
    pub path_loss: PathLossModel,
    pub fading: FadingModel,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        let s = Scenario::desk_default();
        Self {
            n_tx: s.n_tx,
            n_users: s.n_users,
            n_ris: s.n_ris,
            a_max: s.a_max,
            noise_dbm: -80.0,
            eta_db: 1.0,
            layout: s.layout,
            path_loss: s.path_loss,
            fading: s.fading,
        }
    }
}

impl ScenarioConfig {
    /// `N = 50, K = 5` as in the reference setup.
    pub fn paper_scale(mut self) -> Self {
        self.n_ris = 50;
        self.n_users = 5;
        self
    }

    /// Scenario for one scheme at the given budgets.
    pub fn scenario(&self, scheme: &Scheme, p_t_dbm: f64, p_ris_dbm: f64) -> Result<Scenario, ExperimentError> {
        let n_active = scheme.n_active(self.n_ris);
        if n_active > self.n_ris {
            return Err(ExperimentError::Config(format!(
                "{} needs {n_active} active elements but the RIS has {}",
                scheme.id(),
                self.n_ris
            )));
        }
        let mut s = Scenario {
            n_tx: self.n_tx,
            n_users: self.n_users,
            n_ris: self.n_ris,
            a_max: self.a_max,
            p_bs_max: effective_bs_budget(scheme, self.n_ris, p_t_dbm, p_ris_dbm)?,
            p_ris_max: dbm_to_mw(p_ris_dbm),
            layout: self.layout.clone(),
            path_loss: self.path_loss,
            fading: self.fading,
            ..Scenario::paper_default()
        }
        .with_active_count(n_active);
        s.set_noise(dbm_to_mw(self.noise_dbm), db_to_linear(self.eta_db));
        s.validate()?;
        Ok(s)
    }

    /// Scheme-independent scenario used to draw channels.
    fn channel_scenario(&self) -> Result<Scenario, ExperimentError> {
        self.scenario(&Scheme::Passive, 0.0, 0.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScaConfig {
    pub convergence_tol: f64,
    pub max_outer_iterations: usize,
    pub solver_tolerance: f64,
    pub solver_max_iterations: usize,
    pub init_direct_only: bool,
}

impl Default for ScaConfig {
    fn default() -> Self {
        let o = ScaOptions::default();
        Self {
            convergence_tol: o.convergence_tol,
            max_outer_iterations: o.max_outer_iterations,
            solver_tolerance: o.solver.tolerance,
            solver_max_iterations: o.solver.max_iterations,
            init_direct_only: o.init_direct_only,
        }
    }
}

impl ScaConfig {
    pub fn options(&self) -> ScaOptions {
        ScaOptions {
            convergence_tol: self.convergence_tol,
            max_outer_iterations: self.max_outer_iterations,
            solver: SolverSettings {
                tolerance: self.solver_tolerance,
                max_iterations: self.solver_max_iterations,
            },
            init_direct_only: self.init_direct_only,
            ..ScaOptions::default()
        }
    }
}

/// What a run varies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunKind {
    Convergence,
    PtSweep,
    PrisSweep,
    SingleRun,
}

impl RunKind {
    pub fn default_schemes(self) -> Vec<Scheme> {
        match self {
            RunKind::Convergence | RunKind::SingleRun => vec![Scheme::hybrid(4)],
            RunKind::PtSweep => vec![Scheme::NoRis, Scheme::Passive, Scheme::hybrid(4), Scheme::hybrid(8)],
            RunKind::PrisSweep => vec![Scheme::Passive, Scheme::hybrid(4), Scheme::hybrid(8), Scheme::fully_active()],
        }
    }

    fn default_p_ris_dbm(self) -> f64 {
        match self {
            RunKind::PtSweep => -1.0,
            _ => 0.0,
        }
    }
}

fn default_pt_grid() -> Vec<f64> {
    (0..=6).map(|i| 5.0 * i as f64).collect()
}

fn default_pris_grid() -> Vec<f64> {
    (0..=5).map(|i| -10.0 + 5.0 * i as f64).collect()
}

fn default_convergence_pt() -> Vec<f64> {
    vec![20.0, 30.0]
}

fn default_drops() -> usize {
    50
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub scenario: ScenarioConfig,
    /// Empty means the default list of the run kind.
    #[serde(default)]
    pub schemes: Vec<Scheme>,
    /// Fixed BS budget when the run does not sweep it (default 20 dBm).
    #[serde(default)]
    pub p_t_dbm: Option<f64>,
    /// Fixed RIS budget when the run does not sweep it (default -1 dBm for
    /// the P_t sweep, 0 dBm otherwise).
    #[serde(default)]
    pub p_ris_dbm: Option<f64>,
    #[serde(default = "default_pt_grid")]
    pub pt_grid_dbm: Vec<f64>,
    #[serde(default = "default_pris_grid")]
    pub pris_grid_dbm: Vec<f64>,
    #[serde(default = "default_convergence_pt")]
    pub convergence_pt_dbm: Vec<f64>,
    #[serde(default = "default_drops")]
    pub num_drops: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub sca: ScaConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("empty config uses defaults")
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, ExperimentError> {
        let config: Self = serde_json::from_str(text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self, ExperimentError> {
        let mut text = String::new();
        std::fs::File::open(path)
            .and_then(|mut f| f.read_to_string(&mut text))
            .map_err(|source| ExperimentError::ReadConfig {
                path: path.to_path_buf(),
                source,
            })?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        let fail = |m: String| Err(ExperimentError::Config(m));
        if self.num_drops == 0 {
            return fail("num_drops must be at least 1".into());
        }
        for (name, grid) in [
            ("pt_grid_dbm", &self.pt_grid_dbm),
            ("pris_grid_dbm", &self.pris_grid_dbm),
            ("convergence_pt_dbm", &self.convergence_pt_dbm),
        ] {
            if grid.is_empty() {
                return fail(format!("{name} must not be empty"));
            }
            if grid.iter().any(|v| !v.is_finite()) {
                return fail(format!("{name} must be finite"));
            }
        }
        if !(self.sca.convergence_tol > 0.0) {
            return fail("sca.convergence_tol must be positive".into());
        }
        self.scenario.channel_scenario()?;
        Ok(())
    }

    pub fn schemes_for(&self, kind: RunKind) -> Vec<Scheme> {
        if self.schemes.is_empty() {
            kind.default_schemes()
        } else {
            self.schemes.clone()
        }
    }

    pub fn p_t_dbm(&self) -> f64 {
        self.p_t_dbm.unwrap_or(20.0)
    }

    pub fn p_ris_dbm_for(&self, kind: RunKind) -> f64 {
        self.p_ris_dbm.unwrap_or(kind.default_p_ris_dbm())
    }

    /// `(P_t, P_RIS)` in dBm for one scheme at one sweep value.
    fn budgets(&self, kind: RunKind, scheme: &Scheme, sweep: f64) -> (f64, f64) {
        let p_ris = scheme.p_ris_override().unwrap_or(self.p_ris_dbm_for(kind));
        match kind {
            RunKind::Convergence | RunKind::PtSweep => (sweep, p_ris),
            RunKind::PrisSweep => (self.p_t_dbm(), sweep),
            RunKind::SingleRun => (self.p_t_dbm(), p_ris),
        }
    }

    fn grid(&self, kind: RunKind) -> Vec<f64> {
        match kind {
            RunKind::Convergence => self.convergence_pt_dbm.clone(),
            RunKind::PtSweep => self.pt_grid_dbm.clone(),
            RunKind::PrisSweep => self.pris_grid_dbm.clone(),
            RunKind::SingleRun => vec![self.p_t_dbm()],
        }
    }
}

/// One (scheme, sweep value, drop) result. Column order is the CSV schema.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub scheme: String,
    pub sweep_dbm: f64,
    pub drop: u64,
    pub min_rate_nats: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Mean over drops for one (scheme, sweep value).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub scheme: String,
    pub sweep_dbm: f64,
    pub drops: usize,
    pub converged_runs: usize,
    pub mean_min_rate_nats: f64,
}

/// One iteration of one convergence run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub scheme: String,
    pub sweep_dbm: f64,
    pub drop: u64,
    pub iteration: usize,
    pub tau_nats: f64,
    pub max_violation: f64,
}

/// Bookkeeping of one run that does not go into the results CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct RunDetail {
    pub channel_fingerprint: [u8; 32],
    pub p_t_mw: f64,
    pub p_ris_mw: f64,
    pub bs_power_mw: f64,
    pub uses_ris_budget: bool,
    pub max_violation: f64,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub row: ResultRow,
    pub detail: RunDetail,
    pub trace: Vec<TraceRow>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepOutcome {
    pub records: Vec<RunRecord>,
    pub summary: Vec<SummaryRow>,
}

impl SweepOutcome {
    pub fn rows(&self) -> Vec<ResultRow> {
        self.records.iter().map(|r| r.row.clone()).collect()
    }

    pub fn trace(&self) -> Vec<TraceRow> {
        self.records.iter().flat_map(|r| r.trace.iter().cloned()).collect()
    }

    pub fn mean(&self, scheme: &str, sweep_dbm: f64) -> Option<f64> {
        self.summary
            .iter()
            .find(|s| s.scheme == scheme && s.sweep_dbm == sweep_dbm)
            .map(|s| s.mean_min_rate_nats)
    }
}

/// Runs one scheme on one drop. `NoRis` keeps `alpha = 0` and only
/// optimizes the beamformer.
pub fn run_scheme(
    config: &ExperimentConfig,
    scheme: &Scheme,
    p_t_dbm: f64,
    p_ris_dbm: f64,
    channels: &ChannelSet,
    drop: u64,
) -> Result<(Scenario, BcaOutcome), ExperimentError> {
    let scenario = config.scenario.scenario(scheme, p_t_dbm, p_ris_dbm)?;
    let options = config.sca.options();
    let outcome = match scheme {
        Scheme::NoRis => {
            let w = conjugate_beamformer(&channels.direct, scenario.p_bs_max);
            let options = ScaOptions {
                update_ris: false,
                ..options
            };
            bca_solve_from(w, RisVector::zeros(&scenario), &scenario, channels, &options)?
        }
        _ => bca_solve(
            &scenario,
            channels,
            &options,
            &mut stream(config.seed, drop, Purpose::Initialization),
        )?,
    };
    Ok((scenario, outcome))
}

fn run_drop(
    config: &ExperimentConfig,
    kind: RunKind,
    schemes: &[Scheme],
    grid: &[f64],
    drop: u64,
) -> Result<Vec<RunRecord>, ExperimentError> {
    let base = config.scenario.channel_scenario()?;
    let (_, channels) = draw_drop(&base, config.seed, drop)?;
    let fingerprint = channels.fingerprint();
    let mut out = Vec::with_capacity(schemes.len() * grid.len());
    for scheme in schemes {
        for &value in grid {
            let (p_t, p_ris) = config.budgets(kind, scheme, value);
            let (scenario, outcome) = run_scheme(config, scheme, p_t, p_ris, &channels, drop)?;
            let id = scheme.id();
            let residuals = constraint_residuals(&channels, &outcome.w, &outcome.alpha, &scenario, scenario.p_bs_max);
            let trace = if kind == RunKind::Convergence || kind == RunKind::SingleRun {
                outcome
                    .trace
                    .iter()
                    .map(|t| TraceRow {
                        scheme: id.clone(),
                        sweep_dbm: value,
                        drop,
                        iteration: t.iteration,
                        tau_nats: t.tau,
                        max_violation: t.residuals.max(),
                    })
                    .collect()
            } else {
                Vec::new()
            };
            out.push(RunRecord {
                row: ResultRow {
                    scheme: id,
                    sweep_dbm: value,
                    drop,
                    min_rate_nats: outcome.tau,
                    iterations: outcome.iterations,
                    converged: outcome.converged && outcome.error.is_none(),
                },
                detail: RunDetail {
                    channel_fingerprint: fingerprint,
                    p_t_mw: dbm_to_mw(p_t),
                    p_ris_mw: dbm_to_mw(p_ris),
                    bs_power_mw: outcome.w.total_power(),
                    uses_ris_budget: scheme.has_active_elements(scenario.n_ris),
                    max_violation: residuals.max(),
                    error: outcome.error.as_ref().map(|e| e.to_string()),
                },
                trace,
            });
        }
    }
    Ok(out)
}

/// Runs every (drop, scheme, sweep value). `sink` receives each drop's
/// records in drop order as soon as they and all earlier drops are done.
pub fn run_with_sink(
    config: &ExperimentConfig,
    kind: RunKind,
    sink: &mut dyn FnMut(&[RunRecord]) -> Result<(), ExperimentError>,
) -> Result<SweepOutcome, ExperimentError> {
    config.validate()?;
    let schemes = config.schemes_for(kind);
    let grid = config.grid(kind);
    let drops: Vec<u64> = match kind {
        RunKind::SingleRun => vec![0],
        _ => (0..config.num_drops as u64).collect(),
    };
    let batch = 4 * rayon::current_num_threads().max(1);
    let mut records = Vec::new();
    for chunk in drops.chunks(batch) {
        let results: Vec<Result<Vec<RunRecord>, ExperimentError>> = chunk
            .par_iter()
            .map(|&d| run_drop(config, kind, &schemes, &grid, d))
            .collect();
        for r in results {
            let r = r?;
            sink(&r)?;
            records.extend(r);
        }
    }
    let summary = summarize(&records, &schemes, &grid);
    Ok(SweepOutcome { records, summary })
}

pub fn run_kind(config: &ExperimentConfig, kind: RunKind) -> Result<SweepOutcome, ExperimentError> {
    run_with_sink(config, kind, &mut |_| Ok(()))
}

pub fn run_convergence(config: &ExperimentConfig) -> Result<SweepOutcome, ExperimentError> {
    run_kind(config, RunKind::Convergence)
}

pub fn run_pt_sweep(config: &ExperimentConfig) -> Result<SweepOutcome, ExperimentError> {
    run_kind(config, RunKind::PtSweep)
}

pub fn run_pris_sweep(config: &ExperimentConfig) -> Result<SweepOutcome, ExperimentError> {
    run_kind(config, RunKind::PrisSweep)
}

pub fn summarize(records: &[RunRecord], schemes: &[Scheme], grid: &[f64]) -> Vec<SummaryRow> {
    let mut out = Vec::new();
    for scheme in schemes {
        let id = scheme.id();
        for &value in grid {
            let rows: Vec<&ResultRow> = records
                .iter()
                .map(|r| &r.row)
                .filter(|r| r.scheme == id && r.sweep_dbm == value)
                .collect();
            if rows.is_empty() {
                continue;
            }
            out.push(SummaryRow {
                scheme: id.clone(),
                sweep_dbm: value,
                drops: rows.len(),
                converged_runs: rows.iter().filter(|r| r.converged).count(),
                mean_min_rate_nats: rows.iter().map(|r| r.min_rate_nats).sum::<f64>() / rows.len() as f64,
            });
        }
    }
    out
}

pub fn csv_writer<W: Write>(w: W) -> csv::Writer<W> {
    csv::WriterBuilder::new().has_headers(true).from_writer(w)
}

pub fn write_csv<T: Serialize, W: Write>(rows: &[T], w: W) -> Result<(), ExperimentError> {
    let mut writer = csv_writer(w);
    for r in rows {
        writer.serialize(r)?;
    }
    writer.flush()?;
    Ok(())
}

pub fn read_csv<T: for<'de> Deserialize<'de>, R: Read>(r: R) -> Result<Vec<T>, ExperimentError> {
    let mut reader = csv::Reader::from_reader(r);
    let mut out = Vec::new();
    for row in reader.deserialize() {
        out.push(row?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_config() -> ExperimentConfig {
        let mut c = ExperimentConfig::from_json(r#"{"num_drops": 2, "seed": 3}"#).unwrap();
        c.scenario.n_ris = 6;
        c.scenario.n_users = 2;
        c.pt_grid_dbm = vec![10.0, 20.0];
        c.pris_grid_dbm = vec![-10.0, 0.0];
        c.schemes = vec![Scheme::NoRis, Scheme::Passive, Scheme::hybrid(2), Scheme::fully_active()];
        c
    }

    #[test]
    fn budget_examples() {
        let passive = effective_bs_budget(&Scheme::Passive, 50, 20.0, -1.0).unwrap();
        assert!((passive - 100.0).abs() < 1e-12);
        let hybrid = effective_bs_budget(&Scheme::hybrid(4), 50, 20.0, -1.0).unwrap();
        // 100 - 10^{-0.1}
        assert!((hybrid - 99.205_671_765_275_72).abs() < 1e-9, "{hybrid}");
        assert_eq!(effective_bs_budget(&Scheme::hybrid(4), 50, 10.0, 10.0).unwrap(), 0.0);
        assert!(effective_bs_budget(&Scheme::fully_active(), 50, 10.0, 11.0).is_err());
        assert_eq!(effective_bs_budget(&Scheme::NoRis, 50, 10.0, 11.0).unwrap(), 10.0);
    }

    #[test]
    fn config_defaults_and_rejections() {
        let c = ExperimentConfig::from_json("{}").unwrap();
        assert_eq!(c.num_drops, 50);
        assert_eq!(c.scenario.n_ris, 16);
        assert_eq!(c.scenario.n_users, 3);
        assert_eq!(c.schemes_for(RunKind::PtSweep).len(), 4);
        assert_eq!(c.p_ris_dbm_for(RunKind::PtSweep), -1.0);
        assert!(matches!(ExperimentConfig::from_json(r#"{"bogus": 1}"#), Err(ExperimentError::Json(_))));
        assert!(matches!(
            ExperimentConfig::from_json(r#"{"scenario": {"n_rsi": 3}}"#),
            Err(ExperimentError::Json(_))
        ));
        assert!(matches!(
            ExperimentConfig::from_json(r#"{"schemes": [{"kind": "hybrid", "n_active": 2, "x": 1}]}"#),
            Err(ExperimentError::Json(_))
        ));
        assert!(matches!(ExperimentConfig::from_json(r#"{"num_drops": 0}"#), Err(ExperimentError::Config(_))));
        assert!(matches!(ExperimentConfig::from_json(r#"{"pt_grid_dbm": []}"#), Err(ExperimentError::Config(_))));
        let parsed = ExperimentConfig::from_json(
            r#"{"schemes": [{"kind": "no_ris"}, {"kind": "hybrid", "n_active": 4, "p_ris_dbm": -5}]}"#,
        )
        .unwrap();
        assert_eq!(
            parsed.schemes,
            vec![
                Scheme::NoRis,
                Scheme::Hybrid {
                    n_active: 4,
                    p_ris_dbm: Some(-5.0)
                }
            ]
        );
        let round = ExperimentConfig::from_json(&serde_json::to_string(&parsed).unwrap()).unwrap();
        assert_eq!(round, parsed);
    }

    #[test]
    fn sweep_rows_are_complete_paired_and_fair() {
        let c = tiny_config();
        let out = run_pt_sweep(&c).unwrap();
        assert_eq!(out.records.len(), 4 * 2 * 2);
        for d in 0..2u64 {
            let prints: Vec<_> = out
                .records
                .iter()
                .filter(|r| r.row.drop == d)
                .map(|r| r.detail.channel_fingerprint)
                .collect();
            assert!(prints.windows(2).all(|w| w[0] == w[1]));
        }
        for r in &out.records {
            assert!(r.row.min_rate_nats >= 0.0);
            assert!(r.detail.max_violation <= 1e-6);
            let ris = if r.detail.uses_ris_budget { r.detail.p_ris_mw } else { 0.0 };
            assert!(r.detail.bs_power_mw + ris <= r.detail.p_t_mw * (1.0 + 1e-6));
        }
        assert_eq!(out.summary.len(), 4 * 2);
        for s in &out.summary {
            assert_eq!(s.drops, 2);
        }
    }

    #[test]
    fn csv_round_trip() {
        let c = tiny_config();
        let out = run_pris_sweep(&c).unwrap();
        let mut buf = Vec::new();
        write_csv(&out.rows(), &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("scheme,sweep_dbm,drop,min_rate_nats,iterations,converged\n"));
        let back: Vec<ResultRow> = read_csv(buf.as_slice()).unwrap();
        assert_eq!(back, out.rows());
    }

    #[test]
    fn convergence_traces_ascend_and_repeat() {
        let mut c = tiny_config();
        c.schemes = vec![Scheme::hybrid(2)];
        c.num_drops = 1;
        let a = run_convergence(&c).unwrap();
        let b = run_convergence(&c).unwrap();
        assert_eq!(a, b);
        let trace = a.trace();
        assert!(!trace.is_empty());
        for w in trace.windows(2) {
            if w[0].sweep_dbm == w[1].sweep_dbm {
                assert!(w[1].tau_nats >= w[0].tau_nats - 1e-6);
            }
        }
    }
}
