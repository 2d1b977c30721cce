//! Dense linear-algebra kernels: matrix exponential, eigenvalues and the
//! discrete algebraic Riccati equation.

mod dare;
mod eigen;
mod expm;
mod matrix;

pub use dare::{
    dare_residual, gain_from_riccati, lqr_gain, riccati_map, solve_dare, solve_dare_recursion,
    DARE_MAX_ITERATIONS, DARE_RESIDUAL_BOUND, DARE_TOLERANCE,
};
pub use eigen::{eigenvalues, spectral_radius};
pub use expm::mat_exp;
pub use matrix::{Lu, Matrix};
pub use num_complex::Complex64;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum NumericError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("no convergence: {0}")]
    NoConvergence(String),
}
