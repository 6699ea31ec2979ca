//! Successive convex approximation for the max-min rate problem.
//!
//! The outer loop alternates between two convex subproblems: the transmit
//! beamformer for fixed RIS coefficients, and the RIS coefficients for a fixed
//! beamformer. Inside each, the non-convex SINR constraints are replaced by
//! convex inner approximations that are tight at the current iterate, so the
//! current point stays feasible and the minimum rate cannot drop.
//!
//! Both subproblems maximize an epigraph variable `t` subject to
//! `gamma_k >= t`; the rate bound is `ln(1 + t)`.

use std::fmt;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use thiserror::Error;

use crate::channel::{ChannelError, ChannelSet};
use crate::socp::{self, ComplexBlock, ConeKind, ConicProgram, LinExpr, SocpError, SolveStatus, SolverSettings};
use crate::system_model::{
    amplified_noise, constraint_residuals, effective_channels, min_rate, ris_power_data, ris_power_data_for_power,
    sinr, sinr_quadratic_data, user_rate, Beamformer, ConstraintResiduals, ModelError, RisPowerData,
    RisQuadraticData, RisVector, Scenario,
};
use crate::{CMatrix, CVector};

/// Expansion values below this are clamped before building a surrogate.
pub const EXPANSION_FLOOR: f64 = 1e-12;

/// Relative slack allowed when checking that an expansion point is feasible.
const EXPANSION_CHECK_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Beamforming,
    Ris,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::Beamforming => "beamforming",
            Stage::Ris => "RIS",
        })
    }
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum ScaError {
    #[error("surrogate expansion point needs a positive denominator, got {0}")]
    NonPositiveExpansion(f64),
    #[error("{stage} subproblem at iteration {iteration}: current iterate violates `{constraint}` by {violation:e}")]
    InfeasibleExpansion {
        stage: Stage,
        iteration: usize,
        constraint: String,
        violation: f64,
    },
    #[error("{stage} subproblem at iteration {iteration}: solver stopped with {status:?}")]
    Solver {
        stage: Stage,
        iteration: usize,
        status: SolveStatus,
    },
    #[error("{stage} subproblem at iteration {iteration}: {source}")]
    Socp {
        stage: Stage,
        iteration: usize,
        source: SocpError,
    },
    #[error("invalid options: {0}")]
    Options(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Channel(#[from] ChannelError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScaOptions {
    /// Stop once `|tau_i - tau_{i-1}| / max(tau_{i-1}, 1e-12)` falls below this.
    pub convergence_tol: f64,
    pub max_outer_iterations: usize,
    pub solver: SolverSettings,
    /// Match the initial beamformer to the direct channel instead of the
    /// effective channel at the initial RIS coefficients.
    pub init_direct_only: bool,
    pub update_beamformer: bool,
    pub update_ris: bool,
}

impl Default for ScaOptions {
    fn default() -> Self {
        Self {
            convergence_tol: 1e-3,
            max_outer_iterations: 50,
            solver: SolverSettings::default(),
            init_direct_only: false,
            update_beamformer: true,
            update_ris: true,
        }
    }
}

impl ScaOptions {
    pub fn validate(&self) -> Result<(), ScaError> {
        if !(self.convergence_tol > 0.0 && self.convergence_tol.is_finite()) {
            return Err(ScaError::Options(format!(
                "convergence_tol must be positive, got {}",
                self.convergence_tol
            )));
        }
        if !(self.solver.tolerance > 0.0) || self.solver.max_iterations == 0 {
            return Err(ScaError::Options("solver settings must be positive".into()));
        }
        Ok(())
    }
}

/// Dividing the user-side channels by `sigma_u` and setting the UE noise to
/// one leaves every SINR and the RIS power unchanged while keeping the
/// subproblem data near unit scale.
pub fn normalize_noise(scenario: &Scenario, channels: &ChannelSet) -> (Scenario, ChannelSet) {
    let mut s = scenario.clone();
    s.sigma_u_sq = 1.0;
    (s, channels.scaled_user_side(scenario.sigma_u_sq.sqrt()))
}

/// Current iterate of the alternating loop with the slack values used as
/// expansion points by the next subproblems.
#[derive(Debug, Clone, PartialEq)]
pub struct ScaState {
    pub w: Beamformer,
    pub alpha: RisVector,
    /// Beamforming-side SINR slacks.
    pub gamma: Vec<f64>,
    /// Square roots of the SINR numerators (RIS side).
    pub n_tilde: Vec<f64>,
    /// RIS-side SINR slacks.
    pub gamma_tilde: Vec<f64>,
    /// Minimum rate in nats/s/Hz.
    pub tau: f64,
    pub iteration: usize,
}

impl ScaState {
    /// State at `(w, alpha)` with every slack at equality.
    pub fn new(w: Beamformer, alpha: RisVector, channels: &ChannelSet, scenario: &Scenario) -> Self {
        let mut state = Self {
            w,
            alpha,
            gamma: Vec::new(),
            n_tilde: Vec::new(),
            gamma_tilde: Vec::new(),
            tau: 0.0,
            iteration: 0,
        };
        state.refresh(channels, scenario);
        state
    }

    /// Resets the slacks to the exact SINR values and recomputes `tau`.
    pub fn refresh(&mut self, channels: &ChannelSet, scenario: &Scenario) {
        self.gamma = sinr(channels, &self.w, &self.alpha, scenario)
            .into_iter()
            .map(|g| g.max(EXPANSION_FLOOR))
            .collect();
        let data = sinr_quadratic_data(channels, &self.w, scenario);
        self.n_tilde.clear();
        self.gamma_tilde.clear();
        for u in &data.users {
            let num = u.numerator(&self.alpha.alpha).max(0.0);
            let den = u.denominator(&self.alpha.alpha);
            self.n_tilde.push(num.sqrt());
            self.gamma_tilde.push((num / den).max(EXPANSION_FLOOR));
        }
        self.tau = min_rate(&user_rate(channels, &self.w, &self.alpha, scenario));
    }
}

/// `f_qol(x, gamma) = -x^H M x / gamma`.
pub fn f_qol(m: &CMatrix, x: &CVector, gamma: f64) -> f64 {
    -x.dotc(&(m * x)).re / gamma
}

/// First-order expansion of `f_qol` at `(x0, gamma0)`:
/// `F(x, gamma) = (x0^H M x0 / gamma0^2) gamma - 2 Re{x0^H M x} / gamma0`.
#[derive(Debug, Clone, PartialEq)]
pub struct QolSurrogate {
    pub gamma_coeff: f64,
    /// `2 M x0 / gamma0`, so the linear part is `-Re{grad^H x}`.
    pub grad: CVector,
}

impl QolSurrogate {
    pub fn new(m: &CMatrix, x0: &CVector, gamma0: f64) -> Result<Self, ScaError> {
        if !(gamma0 > 0.0) {
            return Err(ScaError::NonPositiveExpansion(gamma0));
        }
        let mx0 = m * x0;
        Ok(Self {
            gamma_coeff: x0.dotc(&mx0).re / (gamma0 * gamma0),
            grad: mx0 * Complex64::new(2.0 / gamma0, 0.0),
        })
    }

    /// `M = [1]` with a real scalar variable.
    pub fn scalar(x0: f64, gamma0: f64) -> Result<Self, ScaError> {
        let one = DMatrix::from_element(1, 1, Complex64::new(1.0, 0.0));
        Self::new(&one, &DVector::from_element(1, Complex64::new(x0, 0.0)), gamma0)
    }

    pub fn eval(&self, x: &CVector, gamma: f64) -> f64 {
        self.gamma_coeff * gamma - self.grad.dotc(x).re
    }
}

/// `f_qua(x) = -||x||^2`.
pub fn f_qua(x: &CVector) -> f64 {
    -x.norm_squared()
}

/// Tangent of `-||x||^2` at `x0`: `2 Re{x0^H (x0 - x)} - ||x0||^2`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuaSurrogate {
    pub x0: CVector,
}

impl QuaSurrogate {
    pub fn new(x0: CVector) -> Self {
        Self { x0 }
    }

    pub fn eval(&self, x: &CVector) -> f64 {
        2.0 * self.x0.dotc(&(&self.x0 - x)).re - self.x0.norm_squared()
    }
}

/// Per-user data of the beamforming subproblem over the stacked `w`.
#[derive(Debug, Clone)]
pub struct BeamformingSubproblemData {
    /// Effective channel rows `h_k^H`.
    pub rows: Vec<CVector>,
    /// `h_k h_k^H` in diagonal block `k` only.
    pub h_hat: Vec<CMatrix>,
    /// `h_k h_k^H` in every diagonal block except `k`.
    pub h_bar: Vec<CMatrix>,
    /// `sigma_r^2 ||h_{2,k}^H Psi||^2 + sigma_u^2`.
    pub sigma_sq: Vec<f64>,
}

pub fn beamforming_data(channels: &ChannelSet, alpha: &RisVector, scenario: &Scenario) -> BeamformingSubproblemData {
    let rows = effective_channels(channels, alpha);
    let (k_users, nt) = (channels.n_users(), channels.n_tx());
    let mut h_hat = Vec::with_capacity(k_users);
    let mut h_bar = Vec::with_capacity(k_users);
    for (k, row) in rows.iter().enumerate() {
        let h = row.map(|c| c.conj());
        let block = &h * h.adjoint();
        let mut hat = DMatrix::zeros(k_users * nt, k_users * nt);
        let mut bar = DMatrix::zeros(k_users * nt, k_users * nt);
        for j in 0..k_users {
            let target = if j == k { &mut hat } else { &mut bar };
            target.view_mut((j * nt, j * nt), (nt, nt)).copy_from(&block);
        }
        h_hat.push(hat);
        h_bar.push(bar);
    }
    let sigma_sq = (0..k_users)
        .map(|k| amplified_noise(channels, alpha, scenario, k) + scenario.sigma_u_sq)
        .collect();
    BeamformingSubproblemData {
        rows,
        h_hat,
        h_bar,
        sigma_sq,
    }
}

/// A built convex subproblem with its variable layout and the current
/// iterate written in the program's variables.
#[derive(Debug, Clone)]
pub struct Subproblem<L> {
    pub program: ConicProgram,
    pub layout: L,
    pub expansion: DVector<f64>,
}

/// Variables `[t, Re w, Im w, gamma_1..gamma_K]` with `w` stacked by user.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BeamformingLayout {
    pub t: usize,
    pub w: ComplexBlock,
    pub gamma: usize,
    pub n_users: usize,
    pub n_tx: usize,
}

impl BeamformingLayout {
    pub fn new(n_users: usize, n_tx: usize) -> Self {
        let w = ComplexBlock::contiguous(1, n_users * n_tx);
        Self {
            t: 0,
            w,
            gamma: w.end(),
            n_users,
            n_tx,
        }
    }

    pub fn num_vars(&self) -> usize {
        self.gamma + self.n_users
    }

    pub fn user_block(&self, k: usize) -> ComplexBlock {
        self.w.sub(k * self.n_tx, self.n_tx)
    }

    fn names(&self) -> Vec<String> {
        let mut names = vec!["t".to_string(); self.num_vars()];
        for k in 0..self.n_users {
            let b = self.user_block(k);
            for i in 0..self.n_tx {
                names[b.re(i)] = format!("re_w{k}_{i}");
                names[b.im(i)] = format!("im_w{k}_{i}");
            }
            names[self.gamma + k] = format!("gamma{k}");
        }
        names
    }

    pub fn write(&self, t: f64, w: &Beamformer, gamma: &[f64]) -> DVector<f64> {
        let mut x = DVector::zeros(self.num_vars());
        x[self.t] = t;
        self.w.write(&w.stacked(), x.as_mut_slice());
        for (k, g) in gamma.iter().enumerate() {
            x[self.gamma + k] = *g;
        }
        x
    }

    pub fn beamformer(&self, x: &DVector<f64>) -> Beamformer {
        Beamformer::from_stacked(&self.w.extract(x.as_slice()), self.n_users, self.n_tx)
    }

    pub fn gammas(&self, x: &DVector<f64>) -> Vec<f64> {
        x.rows(self.gamma, self.n_users).iter().copied().collect()
    }
}

/// Variables `[t, Re alpha, Im alpha, N_1..N_K, gamma_1..gamma_K]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RisLayout {
    pub t: usize,
    pub alpha: ComplexBlock,
    pub n_tilde: usize,
    pub gamma_tilde: usize,
    pub n_users: usize,
}

impl RisLayout {
    pub fn new(n_users: usize, n_ris: usize) -> Self {
        let alpha = ComplexBlock::contiguous(1, n_ris);
        Self {
            t: 0,
            alpha,
            n_tilde: alpha.end(),
            gamma_tilde: alpha.end() + n_users,
            n_users,
        }
    }

    pub fn num_vars(&self) -> usize {
        self.gamma_tilde + self.n_users
    }

    fn names(&self) -> Vec<String> {
        let mut names = vec!["t".to_string(); self.num_vars()];
        for n in 0..self.alpha.len {
            names[self.alpha.re(n)] = format!("re_a{n}");
            names[self.alpha.im(n)] = format!("im_a{n}");
        }
        for k in 0..self.n_users {
            names[self.n_tilde + k] = format!("ntilde{k}");
            names[self.gamma_tilde + k] = format!("gtilde{k}");
        }
        names
    }

    pub fn write(&self, t: f64, alpha: &CVector, n_tilde: &[f64], gamma_tilde: &[f64]) -> DVector<f64> {
        let mut x = DVector::zeros(self.num_vars());
        x[self.t] = t;
        self.alpha.write(alpha, x.as_mut_slice());
        for k in 0..self.n_users {
            x[self.n_tilde + k] = n_tilde[k];
            x[self.gamma_tilde + k] = gamma_tilde[k];
        }
        x
    }

    pub fn alpha(&self, x: &DVector<f64>) -> CVector {
        self.alpha.extract(x.as_slice())
    }

    pub fn n_tildes(&self, x: &DVector<f64>) -> Vec<f64> {
        x.rows(self.n_tilde, self.n_users).iter().copied().collect()
    }

    pub fn gamma_tildes(&self, x: &DVector<f64>) -> Vec<f64> {
        x.rows(self.gamma_tilde, self.n_users).iter().copied().collect()
    }
}

fn add(program: &mut ConicProgram, kind: ConeKind, label: String, rows: &[LinExpr]) {
    // Rows only reference layout variables, so a failure here is a bug.
    program.add(kind, label, rows).expect("subproblem rows are well formed");
}

fn check_expansion(program: &ConicProgram, x0: &DVector<f64>, stage: Stage, iteration: usize) -> Result<(), ScaError> {
    for c in &program.constraints {
        let scale = c.value(x0).amax().max(1.0);
        let violation = c.violation(x0);
        if !(violation <= EXPANSION_CHECK_TOL * scale) {
            return Err(ScaError::InfeasibleExpansion {
                stage,
                iteration,
                constraint: c.label.clone(),
                violation,
            });
        }
    }
    Ok(())
}

/// `sum_{n in A} |alpha_n|^2 ||h_{1,n}||^2` and `sum_{n in A} |alpha_n|^2`.
fn ris_power_split(channels: &ChannelSet, alpha: &RisVector, scenario: &Scenario) -> (f64, f64) {
    scenario.active_set.iter().fold((0.0, 0.0), |(rho, a2), &n| {
        let m = alpha.alpha[n].norm_sqr();
        (rho + m * channels.bs_ris_row_norm_sq(n), a2 + m)
    })
}

/// Convex beamforming subproblem at the current state (RIS coefficients fixed).
pub fn build_beamforming_subproblem(
    state: &ScaState,
    channels: &ChannelSet,
    scenario: &Scenario,
    data: &BeamformingSubproblemData,
) -> Result<Subproblem<BeamformingLayout>, ScaError> {
    let (k_users, nt) = (channels.n_users(), channels.n_tx());
    let layout = BeamformingLayout::new(k_users, nt);
    let mut program = ConicProgram::new(layout.names());
    program.set_objective(&LinExpr::var(layout.t, 1.0));
    let w0 = state.w.stacked();
    let w_entries: Vec<LinExpr> = (0..layout.w.len)
        .flat_map(|i| {
            let (re, im) = layout.w.entry_rows(i, 1.0);
            [re, im]
        })
        .collect();

    for k in 0..k_users {
        let g = layout.gamma + k;
        add(
            &mut program,
            ConeKind::NonNegative,
            format!("rate{k}"),
            &[LinExpr::var(g, 1.0).term(layout.t, -1.0)],
        );
        // Interference plus noise <= -F_qol, with w^H Hbar_k w written as
        // the squared moduli of h_k^H w_j for j != k.
        let qol = QolSurrogate::new(&data.h_hat[k], &w0, state.gamma[k])?;
        let u = layout
            .w
            .real_inner(qol.grad.as_slice())
            .term(g, -qol.gamma_coeff)
            .plus_constant(-data.sigma_sq[k]);
        let mut rows = vec![u, LinExpr::constant(0.5)];
        for j in (0..k_users).filter(|&j| j != k) {
            let (re, im) = layout.user_block(j).product_rows(data.rows[k].as_slice(), Complex64::new(0.0, 0.0));
            rows.push(re);
            rows.push(im);
        }
        add(&mut program, ConeKind::RotatedSecondOrder, format!("sinr{k}"), &rows);
    }

    let mut rows = vec![LinExpr::constant(scenario.p_bs_max.sqrt())];
    rows.extend(w_entries.iter().cloned());
    add(&mut program, ConeKind::SecondOrder, "tx_power".into(), &rows);

    // sum_A |alpha_n|^2 (sigma_r^2 + ||h_{1,n}||^2 ||w||^2) <= P_RIS
    let (rho, a2) = ris_power_split(channels, &state.alpha, scenario);
    if rho > 0.0 {
        let room = scenario.p_ris_max - scenario.sigma_r_sq * a2;
        let mut rows = vec![LinExpr::constant(room.max(0.0).sqrt())];
        rows.extend(w_entries.iter().map(|e| e.clone().scale(rho.sqrt())));
        add(&mut program, ConeKind::SecondOrder, "ris_power".into(), &rows);
        if room < 0.0 {
            return Err(ScaError::InfeasibleExpansion {
                stage: Stage::Beamforming,
                iteration: state.iteration,
                constraint: "ris_power".into(),
                violation: -room,
            });
        }
    }

    let t0 = state.gamma.iter().copied().fold(f64::INFINITY, f64::min);
    let expansion = layout.write(t0, &state.w, &state.gamma);
    check_expansion(&program, &expansion, Stage::Beamforming, state.iteration)?;
    Ok(Subproblem {
        program,
        layout,
        expansion,
    })
}

/// Convex RIS subproblem at the current state (beamformer fixed).
pub fn build_ris_subproblem(
    state: &ScaState,
    scenario: &Scenario,
    data: &RisQuadraticData,
    power: &RisPowerData,
) -> Result<Subproblem<RisLayout>, ScaError> {
    let k_users = data.users.len();
    let n_ris = state.alpha.len();
    let layout = RisLayout::new(k_users, n_ris);
    let mut program = ConicProgram::new(layout.names());
    program.set_objective(&LinExpr::var(layout.t, 1.0));
    let alpha0 = &state.alpha.alpha;

    for (k, u) in data.users.iter().enumerate() {
        let (nv, gv) = (layout.n_tilde + k, layout.gamma_tilde + k);
        add(
            &mut program,
            ConeKind::NonNegative,
            format!("rate{k}"),
            &[LinExpr::var(gv, 1.0).term(layout.t, -1.0)],
        );
        add(&mut program, ConeKind::NonNegative, format!("ntilde{k}"), &[LinExpr::var(nv, 1.0)]);

        // Denominator <= -F_qol(N, gamma). The denominator is the sum of
        // |h0[j] + alpha^T h12[j]|^2 over j != k, the amplified noise and the
        // UE noise, which is exactly the (Qtilde, ttilde, etilde) form.
        let qol = QolSurrogate::scalar(state.n_tilde[k], state.gamma_tilde[k])?;
        let mut ue_noise = u.e_tilde;
        let mut rows = vec![LinExpr::default(), LinExpr::constant(0.5)];
        for j in (0..k_users).filter(|&j| j != k) {
            let (re, im) = layout.alpha.product_rows(u.h12[j].as_slice(), u.h0[j]);
            rows.push(re);
            rows.push(im);
            ue_noise -= u.h0[j].norm_sqr();
        }
        for n in 0..n_ris {
            if u.noise_diag[n] > 0.0 {
                let (re, im) = layout.alpha.entry_rows(n, u.noise_diag[n].sqrt());
                rows.push(re);
                rows.push(im);
            }
        }
        rows[0] = LinExpr::var(nv, qol.grad[0].re)
            .term(gv, -qol.gamma_coeff)
            .plus_constant(-ue_noise);
        add(&mut program, ConeKind::RotatedSecondOrder, format!("sinr_den{k}"), &rows);

        // N^2 + F_qua(Qbar alpha; Qbar alpha0) - 2 Re{alpha^H t} - e <= 0
        let x0 = &u.q_bar * alpha0;
        let g = (&u.q_bar * &x0 + &u.t_vec) * Complex64::new(2.0, 0.0);
        let lin = layout
            .alpha
            .real_inner(g.as_slice())
            .plus_constant(u.e_scalar - x0.norm_squared());
        add(
            &mut program,
            ConeKind::RotatedSecondOrder,
            format!("sinr_num{k}"),
            &[lin, LinExpr::constant(0.5), LinExpr::var(nv, 1.0)],
        );
    }

    if power.xi.iter().any(|&x| x > 0.0) {
        let mut rows = vec![LinExpr::constant(scenario.p_ris_max.sqrt())];
        for n in 0..n_ris {
            if power.xi[n] > 0.0 {
                let (re, im) = layout.alpha.entry_rows(n, power.xi[n].sqrt());
                rows.push(re);
                rows.push(im);
            }
        }
        add(&mut program, ConeKind::SecondOrder, "ris_power".into(), &rows);
    }
    for n in 0..n_ris {
        let (re, im) = layout.alpha.entry_rows(n, 1.0);
        let bound = state.alpha.amplitude_bound(n, scenario.a_max);
        add(
            &mut program,
            ConeKind::SecondOrder,
            format!("modulus{n}"),
            &[LinExpr::constant(bound), re, im],
        );
    }

    let t0 = state.gamma_tilde.iter().copied().fold(f64::INFINITY, f64::min);
    let expansion = layout.write(t0, alpha0, &state.n_tilde, &state.gamma_tilde);
    check_expansion(&program, &expansion, Stage::Ris, state.iteration)?;
    Ok(Subproblem {
        program,
        layout,
        expansion,
    })
}

fn solve_subproblem<L>(
    sub: &Subproblem<L>,
    settings: &SolverSettings,
    stage: Stage,
    iteration: usize,
) -> Result<socp::SolveResult, ScaError> {
    let result = socp::solve(&sub.program, settings).map_err(|source| ScaError::Socp {
        stage,
        iteration,
        source,
    })?;
    if result.status != SolveStatus::Optimal {
        return Err(ScaError::Solver {
            stage,
            iteration,
            status: result.status,
        });
    }
    Ok(result)
}

/// Scales `w` down onto the BS and RIS power budgets if solver round-off left
/// it marginally outside.
pub fn project_beamformer(w: &mut Beamformer, alpha: &RisVector, channels: &ChannelSet, scenario: &Scenario) {
    let mut limit = scenario.p_bs_max;
    let (rho, a2) = ris_power_split(channels, alpha, scenario);
    if rho > 0.0 {
        limit = limit.min((scenario.p_ris_max - scenario.sigma_r_sq * a2).max(0.0) / rho);
    }
    let p = w.total_power();
    if p > limit {
        w.scale((limit / p).sqrt());
    }
}

/// Clips moduli to their bounds and scales the active entries onto the RIS
/// power budget if needed.
pub fn project_ris(alpha: &mut RisVector, power: &RisPowerData, scenario: &Scenario) {
    for n in 0..alpha.len() {
        let bound = alpha.amplitude_bound(n, scenario.a_max);
        let m = alpha.alpha[n].norm();
        if m > bound {
            alpha.alpha[n] *= bound / m;
        }
    }
    let p = power.power(&alpha.alpha);
    if p > scenario.p_ris_max {
        let f = (scenario.p_ris_max / p).sqrt();
        for &n in &scenario.active_set {
            alpha.alpha[n] *= f;
        }
    }
}

#[derive(Debug, Clone)]
pub struct BeamformingStep {
    pub w: Beamformer,
    pub gamma: Vec<f64>,
    /// Epigraph value `t*`; the subproblem certifies `ln(1 + t*)`.
    pub t: f64,
    pub solver_iterations: usize,
}

/// Solves one beamforming subproblem from `state` without accepting it.
pub fn beamforming_step(
    state: &ScaState,
    channels: &ChannelSet,
    scenario: &Scenario,
    settings: &SolverSettings,
) -> Result<BeamformingStep, ScaError> {
    let data = beamforming_data(channels, &state.alpha, scenario);
    let sub = build_beamforming_subproblem(state, channels, scenario, &data)?;
    let result = solve_subproblem(&sub, settings, Stage::Beamforming, state.iteration)?;
    let mut w = sub.layout.beamformer(&result.primal);
    project_beamformer(&mut w, &state.alpha, channels, scenario);
    Ok(BeamformingStep {
        w,
        gamma: sub.layout.gammas(&result.primal),
        t: result.primal[sub.layout.t],
        solver_iterations: result.iterations,
    })
}

#[derive(Debug, Clone)]
pub struct RisStep {
    pub alpha: RisVector,
    pub n_tilde: Vec<f64>,
    pub gamma_tilde: Vec<f64>,
    pub t: f64,
    pub solver_iterations: usize,
}

/// Solves one RIS subproblem from `state` without accepting it.
pub fn ris_step(
    state: &ScaState,
    channels: &ChannelSet,
    scenario: &Scenario,
    settings: &SolverSettings,
) -> Result<RisStep, ScaError> {
    let data = sinr_quadratic_data(channels, &state.w, scenario);
    let power = ris_power_data(channels, &state.w, scenario);
    let sub = build_ris_subproblem(state, scenario, &data, &power)?;
    let result = solve_subproblem(&sub, settings, Stage::Ris, state.iteration)?;
    let mut alpha = RisVector {
        alpha: sub.layout.alpha(&result.primal),
        active_mask: state.alpha.active_mask.clone(),
    };
    project_ris(&mut alpha, &power, scenario);
    Ok(RisStep {
        alpha,
        n_tilde: sub.layout.n_tildes(&result.primal),
        gamma_tilde: sub.layout.gamma_tildes(&result.primal),
        t: result.primal[sub.layout.t],
        solver_iterations: result.iterations,
    })
}

/// `w_k = sqrt(P / K) h_k / ||h_k||` for every user row `h_k^H` in `rows`.
pub fn conjugate_beamformer(rows: &[CVector], total_power: f64) -> Beamformer {
    let per_user = (total_power / rows.len().max(1) as f64).sqrt();
    Beamformer {
        w: rows
            .iter()
            .map(|g| {
                let norm = g.norm();
                if norm > 0.0 {
                    g.map(|c| c.conj()) * Complex64::new(per_user / norm, 0.0)
                } else {
                    DVector::zeros(g.len())
                }
            })
            .collect(),
    }
}

/// Initial point: random phases with a common amplitude that respects every
/// budget, and conjugate beamforming with equal power per user.
pub fn initialize<R: Rng + ?Sized>(
    scenario: &Scenario,
    channels: &ChannelSet,
    options: &ScaOptions,
    rng: &mut R,
) -> ScaState {
    let xi = ris_power_data_for_power(channels, scenario.p_bs_max, scenario);
    let sum_xi: f64 = xi.xi.iter().sum();
    let mut r = 1f64.min(scenario.a_max);
    if sum_xi > 0.0 {
        r = r.min((scenario.p_ris_max / sum_xi).sqrt());
    }
    r *= 1.0 - 1e-3;
    let alpha = RisVector {
        alpha: DVector::from_fn(scenario.n_ris, |_, _| {
            Complex64::from_polar(r, rng.random_range(0.0..std::f64::consts::TAU))
        }),
        active_mask: scenario.active_mask(),
    };

    let rows = if options.init_direct_only {
        channels.direct.clone()
    } else {
        effective_channels(channels, &alpha)
    };
    let w = conjugate_beamformer(&rows, scenario.p_bs_max);
    ScaState::new(w, alpha, channels, scenario)
}

/// One row of the per-iteration trace.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    pub iteration: usize,
    pub tau: f64,
    pub rates: Vec<f64>,
    pub residuals: ConstraintResiduals,
}

#[derive(Debug, Clone)]
pub struct BcaOutcome {
    pub w: Beamformer,
    pub alpha: RisVector,
    /// Final minimum rate in nats/s/Hz.
    pub tau: f64,
    /// Entry 0 is the initial point, entry `i` follows outer iteration `i`.
    pub trace: Vec<TraceRecord>,
    pub converged: bool,
    pub iterations: usize,
    /// Subproblem solutions that would have lowered the minimum rate and were
    /// discarded. Round-off near convergence is the usual cause.
    pub rejected_steps: usize,
    /// Set when a subproblem failed; the fields above hold the last accepted iterate.
    pub error: Option<ScaError>,
}

/// Alternating optimization from a random initial point.
pub fn bca_solve<R: Rng + ?Sized>(
    scenario: &Scenario,
    channels: &ChannelSet,
    options: &ScaOptions,
    rng: &mut R,
) -> Result<BcaOutcome, ScaError> {
    options.validate()?;
    scenario.validate()?;
    channels.check(scenario)?;
    let (sc, ch) = normalize_noise(scenario, channels);
    let state = initialize(&sc, &ch, options, rng);
    Ok(run(state, &sc, &ch, options))
}

/// Alternating optimization from a given feasible `(w, alpha)`.
pub fn bca_solve_from(
    w: Beamformer,
    alpha: RisVector,
    scenario: &Scenario,
    channels: &ChannelSet,
    options: &ScaOptions,
) -> Result<BcaOutcome, ScaError> {
    options.validate()?;
    scenario.validate()?;
    channels.check(scenario)?;
    let (sc, ch) = normalize_noise(scenario, channels);
    let state = ScaState::new(w, alpha, &ch, &sc);
    Ok(run(state, &sc, &ch, options))
}

fn run(mut state: ScaState, scenario: &Scenario, channels: &ChannelSet, options: &ScaOptions) -> BcaOutcome {
    let record = |s: &ScaState| {
        let rates = user_rate(channels, &s.w, &s.alpha, scenario);
        TraceRecord {
            iteration: s.iteration,
            tau: min_rate(&rates),
            rates,
            residuals: constraint_residuals(channels, &s.w, &s.alpha, scenario, scenario.p_bs_max),
        }
    };
    let mut trace = vec![record(&state)];
    let mut converged = false;
    let mut rejected_steps = 0;
    let mut error = None;

    // Nothing to optimize without transmit power.
    if state.w.total_power() == 0.0 {
        converged = true;
    }

    while !converged && state.iteration < options.max_outer_iterations {
        state.iteration += 1;
        let previous = state.tau;
        if options.update_beamformer {
            match beamforming_step(&state, channels, scenario, &options.solver) {
                Ok(step) => {
                    let rate = min_rate(&user_rate(channels, &step.w, &state.alpha, scenario));
                    if rate >= state.tau {
                        state.w = step.w;
                        state.refresh(channels, scenario);
                    } else {
                        rejected_steps += 1;
                    }
                }
                Err(e) => error = Some(e),
            }
        }
        if options.update_ris && error.is_none() {
            match ris_step(&state, channels, scenario, &options.solver) {
                Ok(step) => {
                    let rate = min_rate(&user_rate(channels, &state.w, &step.alpha, scenario));
                    if rate >= state.tau {
                        state.alpha = step.alpha;
                        state.refresh(channels, scenario);
                    } else {
                        rejected_steps += 1;
                    }
                }
                Err(e) => error = Some(e),
            }
        }
        if error.is_some() {
            state.iteration -= 1;
            break;
        }
        trace.push(record(&state));
        converged = (state.tau - previous).abs() / previous.max(1e-12) < options.convergence_tol;
    }

    BcaOutcome {
        tau: state.tau,
        iterations: state.iteration,
        w: state.w,
        alpha: state.alpha,
        trace,
        converged,
        rejected_steps,
        error,
    }
}
