//! Joint transmit beamforming and hybrid active-passive RIS coefficient
//! optimization for max-min rate fairness in a multi-user MISO downlink.
//!
//! The crate is organised bottom-up:
//!
//! * [`channel`] draws network geometry and fading channels for one drop.
//! * [`system_model`] evaluates rates, RIS power and the quadratic forms the
//!   optimizer works with.
//! * [`socp`] is a small dense second-order cone modeling layer and
//!   interior-point solver.
//! * [`sca`] holds the convex surrogates, the two subproblem builders and the
//!   alternating (block coordinate ascent) outer loop.
//! * [`experiments`] runs Monte Carlo drops over schemes and power sweeps and
//!   writes CSV.

pub mod channel;
pub mod experiments;
pub mod rng;
pub mod sca;
pub mod socp;
pub mod system_model;
pub mod units;

pub use nalgebra::{DMatrix, DVector};
pub use num_complex::Complex64;

pub type CVector = DVector<Complex64>;
pub type CMatrix = DMatrix<Complex64>;

pub use channel::{ChannelSet, FadingModel, Geometry, PathLossModel};
pub use experiments::{ExperimentConfig, ExperimentError, ResultRow, RunKind, Scheme};
pub use sca::{bca_solve, BcaOutcome, ScaOptions, ScaState};
pub use socp::{ConeKind, ConicProgram, SolveResult, SolveStatus, SolverSettings};
pub use system_model::{Beamformer, RisVector, Scenario};
