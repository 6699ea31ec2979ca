//! Real second-order cone programs: a small modeling layer, the lifting of
//! complex variables and Hermitian forms to reals, and a dense primal-dual
//! interior-point solver.
//!
//! A program maximizes a linear objective subject to constraints of the form
//! `A x + b in K`, with `K` a nonnegative orthant, a second-order cone
//! `{(t, y) : ||y|| <= t}` or a rotated second-order cone
//! `{(u, v, y) : 2uv >= ||y||^2, u, v >= 0}`.

mod ipm;
pub mod lift;
mod program;

pub use ipm::{solve, Residuals, SolveResult, SolveStatus, SolverSettings};
pub use lift::{lift_complex, lift_hermitian_quadratic, unlift_complex, ComplexBlock};
pub use program::{ConeConstraint, ConeKind, ConicProgram, LinExpr};

use thiserror::Error;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum SocpError {
    #[error("malformed program: {0}")]
    Malformed(String),
    #[error("matrix is not Hermitian (asymmetry {asymmetry:e} vs norm {norm:e})")]
    NotHermitian { asymmetry: f64, norm: f64 },
    #[error("linear system could not be factorized at iteration {0}")]
    Numerical(usize),
}
