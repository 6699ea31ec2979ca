//! Scenario constants and the physical quantities of the downlink:
//! effective channels, per-user rates, RIS transmit power and the quadratic
//! forms of the SINR in the RIS coefficients.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use thiserror::Error;

use crate::channel::{ChannelSet, FadingModel, Layout, PathLossModel};
use crate::units::{db_to_linear, dbm_to_mw};
use crate::{CMatrix, CVector};

#[derive(Debug, Clone, Error, PartialEq)]
pub enum ModelError {
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
}

/// All constants of one system configuration. Powers in mW.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub n_tx: usize,
    pub n_users: usize,
    pub n_ris: usize,
    /// Zero-based, strictly increasing indices of the active elements.
    pub active_set: Vec<usize>,
    /// Amplitude bound of active elements.
    pub a_max: f64,
    pub p_bs_max: f64,
    pub p_ris_max: f64,
    pub sigma_u_sq: f64,
    pub sigma_r_sq: f64,
    pub eta: f64,
    pub layout: Layout,
    pub path_loss: PathLossModel,
    pub fading: FadingModel,
}

impl Scenario {
    /// `N_t = 2, K = 5, N = 50, N_a = 4`, 20 dBm BS budget, 0 dBm RIS budget.
    pub fn paper_default() -> Self {
        let sigma_u_sq = dbm_to_mw(-80.0);
        let eta = db_to_linear(1.0);
        Self {
            n_tx: 2,
            n_users: 5,
            n_ris: 50,
            active_set: (0..4).collect(),
            a_max: db_to_linear(40.0).sqrt(),
            p_bs_max: dbm_to_mw(20.0),
            p_ris_max: dbm_to_mw(0.0),
            sigma_u_sq,
            sigma_r_sq: (eta + 1.0) * sigma_u_sq,
            eta,
            layout: Layout::default(),
            path_loss: PathLossModel::default(),
            fading: FadingModel::default(),
        }
    }

    /// Small variant (`N = 16, K = 3, N_a = 2`) for quick runs.
    pub fn desk_default() -> Self {
        Self {
            n_users: 3,
            n_ris: 16,
            active_set: (0..2).collect(),
            ..Self::paper_default()
        }
    }

    /// Sets `A = {0, .., n_active - 1}`.
    pub fn with_active_count(mut self, n_active: usize) -> Self {
        self.active_set = (0..n_active).collect();
        self
    }

    pub fn set_noise(&mut self, sigma_u_sq: f64, eta: f64) {
        self.sigma_u_sq = sigma_u_sq;
        self.eta = eta;
        self.sigma_r_sq = (eta + 1.0) * sigma_u_sq;
    }

    pub fn n_active(&self) -> usize {
        self.active_set.len()
    }

    pub fn active_mask(&self) -> Vec<bool> {
        let mut mask = vec![false; self.n_ris];
        for &n in &self.active_set {
            mask[n] = true;
        }
        mask
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let fail = |m: &str| Err(ModelError::InvalidScenario(m.to_string()));
        if self.n_tx == 0 || self.n_users == 0 {
            return fail("N_t and K must be at least 1");
        }
        if self.active_set.len() > self.n_ris {
            return fail("more active elements than RIS elements");
        }
        if self.active_set.windows(2).any(|w| w[0] >= w[1]) {
            return fail("active set must be strictly increasing");
        }
        if self.active_set.iter().any(|&n| n >= self.n_ris) {
            return fail("active index out of range");
        }
        if !(self.a_max >= 1.0) {
            return fail("a_max must be at least 1");
        }
        for (name, v) in [
            ("p_bs_max", self.p_bs_max),
            ("p_ris_max", self.p_ris_max),
            ("sigma_r_sq", self.sigma_r_sq),
        ] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(ModelError::InvalidScenario(format!("{name} must be finite and >= 0")));
            }
        }
        if !(self.sigma_u_sq > 0.0) {
            return fail("sigma_u_sq must be positive");
        }
        Ok(())
    }
}

/// RIS coefficients `alpha_n = |alpha_n| e^{j theta_n}` with the active-element mask.
#[derive(Debug, Clone, PartialEq)]
pub struct RisVector {
    pub alpha: CVector,
    pub active_mask: Vec<bool>,
}

impl RisVector {
    pub fn zeros(scenario: &Scenario) -> Self {
        Self {
            alpha: DVector::zeros(scenario.n_ris),
            active_mask: scenario.active_mask(),
        }
    }

    pub fn new(alpha: CVector, scenario: &Scenario) -> Result<Self, ModelError> {
        if alpha.len() != scenario.n_ris {
            return Err(ModelError::Dimension(format!(
                "alpha has {} entries, scenario has N = {}",
                alpha.len(),
                scenario.n_ris
            )));
        }
        Ok(Self {
            alpha,
            active_mask: scenario.active_mask(),
        })
    }

    pub fn len(&self) -> usize {
        self.alpha.len()
    }

    pub fn is_empty(&self) -> bool {
        self.alpha.is_empty()
    }

    pub fn amplitude_bound(&self, n: usize, a_max: f64) -> f64 {
        if self.active_mask[n] {
            a_max
        } else {
            1.0
        }
    }

    /// Largest `|alpha_n| - bound_n`, clamped at zero.
    pub fn modulus_violation(&self, a_max: f64) -> f64 {
        (0..self.len())
            .map(|n| (self.alpha[n].norm() - self.amplitude_bound(n, a_max)).max(0.0))
            .fold(0.0, f64::max)
    }
}

/// Per-user transmit vectors `w_k`, each of length `N_t`.
#[derive(Debug, Clone, PartialEq)]
pub struct Beamformer {
    pub w: Vec<CVector>,
}

impl Beamformer {
    pub fn zeros(n_users: usize, n_tx: usize) -> Self {
        Self {
            w: vec![DVector::zeros(n_tx); n_users],
        }
    }

    pub fn n_users(&self) -> usize {
        self.w.len()
    }

    /// `[w_1; ...; w_K]`.
    pub fn stacked(&self) -> CVector {
        let n_tx = self.w.first().map_or(0, |v| v.len());
        DVector::from_iterator(self.w.len() * n_tx, self.w.iter().flat_map(|v| v.iter().copied()))
    }

    pub fn from_stacked(stacked: &CVector, n_users: usize, n_tx: usize) -> Self {
        assert_eq!(stacked.len(), n_users * n_tx, "stacked length");
        Self {
            w: (0..n_users)
                .map(|k| stacked.rows(k * n_tx, n_tx).into_owned())
                .collect(),
        }
    }

    /// `sum_k ||w_k||^2`.
    pub fn total_power(&self) -> f64 {
        self.w.iter().map(|v| v.norm_squared()).sum()
    }

    pub fn scale(&mut self, factor: f64) {
        for v in &mut self.w {
            *v *= Complex64::new(factor, 0.0);
        }
    }
}

/// Row `h_k^H = h_{d,k}^H + h_{2,k}^H diag(alpha) H_1`.
pub fn effective_channel(channels: &ChannelSet, alpha: &RisVector, user: usize) -> CVector {
    let weighted = channels.ris_ue[user].component_mul(&alpha.alpha);
    &channels.direct[user] + channels.bs_ris.tr_mul(&weighted)
}

pub fn effective_channels(channels: &ChannelSet, alpha: &RisVector) -> Vec<CVector> {
    (0..channels.n_users())
        .map(|k| effective_channel(channels, alpha, k))
        .collect()
}

/// `sigma_r^2 * sum_{n in A} |alpha_n|^2 |h_{2,k}[n]|^2`.
pub fn amplified_noise(channels: &ChannelSet, alpha: &RisVector, scenario: &Scenario, user: usize) -> f64 {
    let r = &channels.ris_ue[user];
    scenario.sigma_r_sq
        * scenario
            .active_set
            .iter()
            .map(|&n| alpha.alpha[n].norm_sqr() * r[n].norm_sqr())
            .sum::<f64>()
}

pub fn sinr(channels: &ChannelSet, w: &Beamformer, alpha: &RisVector, scenario: &Scenario) -> Vec<f64> {
    let rows = effective_channels(channels, alpha);
    (0..channels.n_users())
        .map(|k| {
            let g = &rows[k];
            let signal = g.dot(&w.w[k]).norm_sqr();
            let interference: f64 = (0..w.n_users())
                .filter(|&j| j != k)
                .map(|j| g.dot(&w.w[j]).norm_sqr())
                .sum();
            signal / (interference + amplified_noise(channels, alpha, scenario, k) + scenario.sigma_u_sq)
        })
        .collect()
}

/// Achievable rates `R_k = ln(1 + SINR_k)` in nats/s/Hz.
pub fn user_rate(channels: &ChannelSet, w: &Beamformer, alpha: &RisVector, scenario: &Scenario) -> Vec<f64> {
    sinr(channels, w, alpha, scenario).into_iter().map(f64::ln_1p).collect()
}

/// Smallest entry; `+inf` for an empty slice.
pub fn min_rate(rates: &[f64]) -> f64 {
    rates.iter().copied().fold(f64::INFINITY, f64::min)
}

/// Forwarded-power coefficients `xi_n` (zero off the active set).
#[derive(Debug, Clone, PartialEq)]
pub struct RisPowerData {
    pub xi: DVector<f64>,
}

impl RisPowerData {
    pub fn as_diagonal(&self) -> DMatrix<f64> {
        DMatrix::from_diagonal(&self.xi)
    }

    /// `alpha^H Xi alpha`.
    pub fn power(&self, alpha: &CVector) -> f64 {
        self.xi
            .iter()
            .zip(alpha.iter())
            .map(|(x, a)| x * a.norm_sqr())
            .sum()
    }
}

/// `xi_n = sigma_r^2 + ||h_{1,n}||^2 * total_power` for `n` in `A`.
pub fn ris_power_data_for_power(channels: &ChannelSet, total_power: f64, scenario: &Scenario) -> RisPowerData {
    let mut xi = DVector::zeros(scenario.n_ris);
    for &n in &scenario.active_set {
        xi[n] = scenario.sigma_r_sq + channels.bs_ris_row_norm_sq(n) * total_power;
    }
    RisPowerData { xi }
}

pub fn ris_power_data(channels: &ChannelSet, w: &Beamformer, scenario: &Scenario) -> RisPowerData {
    ris_power_data_for_power(channels, w.total_power(), scenario)
}

/// `P_RIS = sum_{n in A} |alpha_n|^2 xi_n`.
pub fn ris_transmit_power(channels: &ChannelSet, w: &Beamformer, alpha: &RisVector, scenario: &Scenario) -> f64 {
    ris_power_data(channels, w, scenario).power(&alpha.alpha)
}

/// The SINR numerator and denominator of one user as quadratic forms in alpha.
#[derive(Debug, Clone)]
pub struct UserQuadratic {
    pub q_mat: CMatrix,
    pub t_vec: CVector,
    pub e_scalar: f64,
    pub q_tilde: CMatrix,
    pub t_tilde: CVector,
    pub e_tilde: f64,
    /// Rank-one square root of `q_mat`.
    pub q_bar: CMatrix,
    /// `h0[j] = h_{d,k}^H w_j`.
    pub h0: Vec<Complex64>,
    /// `h12[j] = diag(h_{2,k}^H) H_1 w_j`, so the reflected part of `h_k^H w_j` is `alpha^T h12[j]`.
    pub h12: Vec<CVector>,
    /// `sigma_r^2 |h_{2,k}[n]|^2` on the active set, zero elsewhere.
    pub noise_diag: DVector<f64>,
}

impl UserQuadratic {
    fn form(q: &CMatrix, t: &CVector, e: f64, alpha: &CVector) -> f64 {
        let quad = alpha.dotc(&(q * alpha)).re;
        let lin = alpha.dotc(t).re;
        quad + 2.0 * lin + e
    }

    /// `alpha^H Q alpha + 2 Re{alpha^H t} + e`, i.e. `|h_k^H w_k|^2`.
    pub fn numerator(&self, alpha: &CVector) -> f64 {
        Self::form(&self.q_mat, &self.t_vec, self.e_scalar, alpha)
    }

    pub fn denominator(&self, alpha: &CVector) -> f64 {
        Self::form(&self.q_tilde, &self.t_tilde, self.e_tilde, alpha)
    }

    pub fn sinr(&self, alpha: &CVector) -> f64 {
        self.numerator(alpha) / self.denominator(alpha)
    }
}

#[derive(Debug, Clone)]
pub struct RisQuadraticData {
    pub users: Vec<UserQuadratic>,
}

/// Rank-one square root `u u^H / ||u||` of `u u^H`.
pub fn rank_one_sqrt(u: &CVector) -> CMatrix {
    let norm = u.norm();
    if norm == 0.0 {
        return DMatrix::zeros(u.len(), u.len());
    }
    (u * u.adjoint()) / Complex64::new(norm, 0.0)
}

pub fn sinr_quadratic_data(channels: &ChannelSet, w: &Beamformer, scenario: &Scenario) -> RisQuadraticData {
    let n = channels.n_ris();
    let k_users = channels.n_users();
    let h1w: Vec<CVector> = w.w.iter().map(|wj| &channels.bs_ris * wj).collect();
    let users = (0..k_users)
        .map(|k| {
            let r = &channels.ris_ue[k];
            let h0: Vec<Complex64> = w.w.iter().map(|wj| channels.direct[k].dot(wj)).collect();
            let h12: Vec<CVector> = h1w.iter().map(|b| r.component_mul(b)).collect();

            let u = h12[k].map(|c| c.conj());
            let q_mat = &u * u.adjoint();
            let t_vec = &u * h0[k];
            let e_scalar = h0[k].norm_sqr();

            let mut noise_diag = DVector::zeros(n);
            for &a in &scenario.active_set {
                noise_diag[a] = scenario.sigma_r_sq * r[a].norm_sqr();
            }
            let mut q_tilde: CMatrix = DMatrix::from_diagonal(&noise_diag.map(|v| Complex64::new(v, 0.0)));
            let mut t_tilde: CVector = DVector::zeros(n);
            let mut e_tilde = scenario.sigma_u_sq;
            for j in (0..k_users).filter(|&j| j != k) {
                let v = h12[j].map(|c| c.conj());
                q_tilde += &v * v.adjoint();
                t_tilde += &v * h0[j];
                e_tilde += h0[j].norm_sqr();
            }
            UserQuadratic {
                q_bar: rank_one_sqrt(&u),
                q_mat,
                t_vec,
                e_scalar,
                q_tilde,
                t_tilde,
                e_tilde,
                h0,
                h12,
                noise_diag,
            }
        })
        .collect();
    RisQuadraticData { users }
}

/// Absolute violations of the power and modulus constraints (zero when satisfied).
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ConstraintResiduals {
    pub tx_power: f64,
    pub passive_modulus: f64,
    pub active_modulus: f64,
    pub ris_power: f64,
}

impl ConstraintResiduals {
    pub fn max(&self) -> f64 {
        self.tx_power
            .max(self.passive_modulus)
            .max(self.active_modulus)
            .max(self.ris_power)
    }
}

/// Checks the BS power budget `p_bs_budget` and the RIS constraints of `scenario`.
pub fn constraint_residuals(
    channels: &ChannelSet,
    w: &Beamformer,
    alpha: &RisVector,
    scenario: &Scenario,
    p_bs_budget: f64,
) -> ConstraintResiduals {
    let mut out = ConstraintResiduals {
        tx_power: (w.total_power() - p_bs_budget).max(0.0),
        ..Default::default()
    };
    for n in 0..alpha.len() {
        let m = alpha.alpha[n].norm();
        if alpha.active_mask[n] {
            out.active_modulus = out.active_modulus.max(m - scenario.a_max);
        } else {
            out.passive_modulus = out.passive_modulus.max(m - 1.0);
        }
    }
    out.ris_power = (ris_transmit_power(channels, w, alpha, scenario) - scenario.p_ris_max).max(0.0);
    out
}
