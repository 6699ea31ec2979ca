//! Network geometry and fading channel generation for one drop.
//!
//! Channels are stored from the user's point of view: `direct[k]` holds the
//! row `h_{d,k}^H` and `ris_ue[k]` holds the row `h_{2,k}^H`, so received
//! amplitudes are plain (unconjugated) products with the transmit vectors.
//! `bs_ris` is the `N x N_t` matrix `H_1`.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::rng::{self, Purpose};
use crate::system_model::Scenario;
use crate::{CMatrix, CVector};

#[derive(Debug, Clone, Error, PartialEq)]
pub enum ChannelError {
    #[error("link distance must be positive, got {0}")]
    NonPositiveDistance(f64),
    #[error("mean power must be non-negative, got {0}")]
    NegativePower(f64),
    #[error("rician factor must be non-negative, got {0}")]
    NegativeRicianFactor(f64),
    #[error("line-of-sight component is {got_rows}x{got_cols}, expected {rows}x{cols}")]
    ShapeMismatch {
        rows: usize,
        cols: usize,
        got_rows: usize,
        got_cols: usize,
    },
    #[error("line-of-sight entry ({row},{col}) is not unit modulus")]
    NotUnitModulus { row: usize, col: usize },
    #[error("channel set does not match the scenario: {0}")]
    Dimension(String),
}

pub type Point = [f64; 2];

fn distance(a: Point, b: Point) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

/// Where the BS and RIS sit and the rectangle users are dropped in.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Layout {
    pub bs_position: Point,
    pub ris_position: Point,
    pub ue_x_range: [f64; 2],
    pub ue_y_range: [f64; 2],
}

impl Default for Layout {
    fn default() -> Self {
        Self {
            bs_position: [0.0, 0.0],
            ris_position: [20.0, 0.0],
            ue_x_range: [0.0, 200.0],
            ue_y_range: [-100.0, 100.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Geometry {
    pub bs_position: Point,
    pub ris_position: Point,
    pub ue_positions: Vec<Point>,
}

/// Distance-dependent path loss `beta0 * d^-eps` with one exponent per link type.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathLossModel {
    pub beta0: f64,
    pub eps_direct: f64,
    pub eps_bs_ris: f64,
    pub eps_ris_ue: f64,
}

impl Default for PathLossModel {
    fn default() -> Self {
        Self {
            beta0: 1e-3,
            eps_direct: 3.2,
            eps_bs_ris: 2.2,
            eps_ris_ue: 2.5,
        }
    }
}

/// Rician factors (linear) of the reflected links. Direct links are Rayleigh.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FadingModel {
    pub rician_k_bs_ris: f64,
    pub rician_k_ris_ue: f64,
}

impl Default for FadingModel {
    fn default() -> Self {
        Self {
            rician_k_bs_ris: 100.0,
            rician_k_ris_ue: 10.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelSet {
    /// `h_{d,k}^H`, length `N_t` each.
    pub direct: Vec<CVector>,
    /// `H_1`, `N x N_t`.
    pub bs_ris: CMatrix,
    /// `h_{2,k}^H`, length `N` each.
    pub ris_ue: Vec<CVector>,
}

impl ChannelSet {
    pub fn n_users(&self) -> usize {
        self.direct.len()
    }

    pub fn n_tx(&self) -> usize {
        self.bs_ris.ncols()
    }

    pub fn n_ris(&self) -> usize {
        self.bs_ris.nrows()
    }

    /// `||h_{1,n}||^2`, the squared norm of row `n` of `H_1`.
    pub fn bs_ris_row_norm_sq(&self, n: usize) -> f64 {
        self.bs_ris.row(n).iter().map(|c| c.norm_sqr()).sum()
    }

    pub fn check(&self, scenario: &Scenario) -> Result<(), ChannelError> {
        let k = scenario.n_users;
        let dims_ok = self.direct.len() == k
            && self.ris_ue.len() == k
            && self.bs_ris.nrows() == scenario.n_ris
            && self.bs_ris.ncols() == scenario.n_tx
            && self.direct.iter().all(|d| d.len() == scenario.n_tx)
            && self.ris_ue.iter().all(|r| r.len() == scenario.n_ris);
        if !dims_ok {
            return Err(ChannelError::Dimension(format!(
                "expected K={}, N_t={}, N={}",
                k, scenario.n_tx, scenario.n_ris
            )));
        }
        let finite = self
            .direct
            .iter()
            .chain(self.ris_ue.iter())
            .flat_map(|v| v.iter())
            .chain(self.bs_ris.iter())
            .all(|c| c.re.is_finite() && c.im.is_finite());
        if !finite {
            return Err(ChannelError::Dimension("non-finite entry".into()));
        }
        Ok(())
    }

    /// Returns a copy with the user-side rows divided by `scale`.
    ///
    /// Dividing `h_d` and `h_2` by `sigma_u` leaves every SINR unchanged when
    /// the UE noise is set to one, while `H_1` (and thus RIS power) is untouched.
    pub fn scaled_user_side(&self, scale: f64) -> ChannelSet {
        let inv = 1.0 / scale;
        ChannelSet {
            direct: self.direct.iter().map(|d| d * Complex64::new(inv, 0.0)).collect(),
            bs_ris: self.bs_ris.clone(),
            ris_ue: self.ris_ue.iter().map(|r| r * Complex64::new(inv, 0.0)).collect(),
        }
    }

    /// SHA-256 over the raw bit patterns of every entry, for pairing checks.
    pub fn fingerprint(&self) -> [u8; 32] {
        let mut hasher = Sha256::new();
        let mut feed = |c: &Complex64| {
            hasher.update(c.re.to_bits().to_le_bytes());
            hasher.update(c.im.to_bits().to_le_bytes());
        };
        self.direct.iter().flat_map(|v| v.iter()).for_each(&mut feed);
        self.bs_ris.iter().for_each(&mut feed);
        self.ris_ue.iter().flat_map(|v| v.iter()).for_each(&mut feed);
        hasher.finalize().into()
    }
}

pub fn path_loss(model: &PathLossModel, distance: f64, exponent: f64) -> Result<f64, ChannelError> {
    if !(distance > 0.0) {
        return Err(ChannelError::NonPositiveDistance(distance));
    }
    Ok(model.beta0 * distance.powf(-exponent))
}

/// BS and RIS at their layout positions, users i.i.d. uniform over the drop rectangle.
pub fn drop_users<R: Rng + ?Sized>(scenario: &Scenario, rng: &mut R) -> Geometry {
    let layout = &scenario.layout;
    let [x0, x1] = layout.ue_x_range;
    let [y0, y1] = layout.ue_y_range;
    let ue_positions = (0..scenario.n_users)
        .map(|_| {
            let u: f64 = rng.random();
            let v: f64 = rng.random();
            [x0 + (x1 - x0) * u, y0 + (y1 - y0) * v]
        })
        .collect();
    Geometry {
        bs_position: layout.bs_position,
        ris_position: layout.ris_position,
        ue_positions,
    }
}

fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R, std_per_dim: f64) -> Complex64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re * std_per_dim, im * std_per_dim)
}

/// I.i.d. circularly-symmetric complex Gaussian entries with `E|x|^2 = mean_power`.
pub fn sample_rayleigh<R: Rng + ?Sized>(
    rows: usize,
    cols: usize,
    mean_power: f64,
    rng: &mut R,
) -> Result<CMatrix, ChannelError> {
    if !(mean_power >= 0.0) {
        return Err(ChannelError::NegativePower(mean_power));
    }
    let std = (mean_power / 2.0).sqrt();
    // Column-major fill order; fixed so draws are reproducible.
    Ok(DMatrix::from_fn(rows, cols, |_, _| complex_gaussian(rng, std)))
}

/// Amplitude weights `(sqrt(K/(K+1)), sqrt(1/(K+1)))` of the LOS and scattered parts.
pub fn rician_weights(k_factor: f64) -> (f64, f64) {
    ((k_factor / (k_factor + 1.0)).sqrt(), (1.0 / (k_factor + 1.0)).sqrt())
}

pub fn sample_rician<R: Rng + ?Sized>(
    rows: usize,
    cols: usize,
    k_factor: f64,
    mean_power: f64,
    los: &CMatrix,
    rng: &mut R,
) -> Result<CMatrix, ChannelError> {
    if !(k_factor >= 0.0) {
        return Err(ChannelError::NegativeRicianFactor(k_factor));
    }
    if los.nrows() != rows || los.ncols() != cols {
        return Err(ChannelError::ShapeMismatch {
            rows,
            cols,
            got_rows: los.nrows(),
            got_cols: los.ncols(),
        });
    }
    for c in 0..cols {
        for r in 0..rows {
            if (los[(r, c)].norm() - 1.0).abs() > 1e-9 {
                return Err(ChannelError::NotUnitModulus { row: r, col: c });
            }
        }
    }
    let scattered = sample_rayleigh(rows, cols, mean_power, rng)?;
    let (w_los, w_nlos) = rician_weights(k_factor);
    let amp = mean_power.sqrt();
    Ok(los.map(|c| c * (w_los * amp)) + scattered * Complex64::new(w_nlos, 0.0))
}

/// Half-wavelength ULA response `exp(j*pi*m*sin(angle))`, `angle` measured from broadside.
pub fn ula_steering(len: usize, angle: f64) -> CVector {
    let phase_step = std::f64::consts::PI * angle.sin();
    DVector::from_fn(len, |m, _| Complex64::from_polar(1.0, phase_step * m as f64))
}

/// Angle of `to - from` with respect to the array broadside (the +x axis).
fn bearing(from: Point, to: Point) -> f64 {
    (to[1] - from[1]).atan2(to[0] - from[0])
}

fn direct_channels<R: Rng + ?Sized>(
    scenario: &Scenario,
    geometry: &Geometry,
    rng: &mut R,
) -> Result<Vec<CVector>, ChannelError> {
    let pl = &scenario.path_loss;
    geometry
        .ue_positions
        .iter()
        .map(|&ue| {
            let beta = path_loss(pl, distance(geometry.bs_position, ue), pl.eps_direct)?;
            let m = sample_rayleigh(scenario.n_tx, 1, beta, rng)?;
            Ok(m.column(0).into_owned())
        })
        .collect()
}

fn bs_ris_channel<R: Rng + ?Sized>(
    scenario: &Scenario,
    geometry: &Geometry,
    rng: &mut R,
) -> Result<CMatrix, ChannelError> {
    let pl = &scenario.path_loss;
    let d = distance(geometry.bs_position, geometry.ris_position);
    let beta = path_loss(pl, d, pl.eps_bs_ris)?;
    let departure = ula_steering(scenario.n_tx, bearing(geometry.bs_position, geometry.ris_position));
    let arrival = ula_steering(scenario.n_ris, bearing(geometry.ris_position, geometry.bs_position));
    let los = &arrival * departure.adjoint();
    sample_rician(
        scenario.n_ris,
        scenario.n_tx,
        scenario.fading.rician_k_bs_ris,
        beta,
        &los,
        rng,
    )
}

fn ris_ue_channels<R: Rng + ?Sized>(
    scenario: &Scenario,
    geometry: &Geometry,
    rng: &mut R,
) -> Result<Vec<CVector>, ChannelError> {
    let pl = &scenario.path_loss;
    geometry
        .ue_positions
        .iter()
        .map(|&ue| {
            let beta = path_loss(pl, distance(geometry.ris_position, ue), pl.eps_ris_ue)?;
            // Row h_2^H: conjugate of the RIS response toward the user.
            let los = ula_steering(scenario.n_ris, bearing(geometry.ris_position, ue)).map(|c| c.conj());
            let los = DMatrix::from_column_slice(scenario.n_ris, 1, los.as_slice());
            let m = sample_rician(scenario.n_ris, 1, scenario.fading.rician_k_ris_ue, beta, &los, rng)?;
            Ok(m.column(0).into_owned())
        })
        .collect()
}

/// Draws every channel block from a single random source.
pub fn generate_channels<R: Rng + ?Sized>(
    scenario: &Scenario,
    geometry: &Geometry,
    rng: &mut R,
) -> Result<ChannelSet, ChannelError> {
    let direct = direct_channels(scenario, geometry, rng)?;
    let bs_ris = bs_ris_channel(scenario, geometry, rng)?;
    let ris_ue = ris_ue_channels(scenario, geometry, rng)?;
    Ok(ChannelSet {
        direct,
        bs_ris,
        ris_ue,
    })
}

/// One Monte Carlo drop with a separate random stream per channel block.
pub fn draw_drop(scenario: &Scenario, root_seed: u64, drop: u64) -> Result<(Geometry, ChannelSet), ChannelError> {
    let geometry = drop_users(scenario, &mut rng::stream(root_seed, drop, Purpose::Geometry));
    let direct = direct_channels(scenario, &geometry, &mut rng::stream(root_seed, drop, Purpose::DirectChannel))?;
    let bs_ris = bs_ris_channel(scenario, &geometry, &mut rng::stream(root_seed, drop, Purpose::BsRisChannel))?;
    let ris_ue = ris_ue_channels(scenario, &geometry, &mut rng::stream(root_seed, drop, Purpose::RisUeChannel))?;
    Ok((
        geometry,
        ChannelSet {
            direct,
            bs_ris,
            ris_ue,
        },
    ))
}
