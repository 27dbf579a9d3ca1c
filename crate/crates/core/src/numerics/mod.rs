//! Dense linear algebra, Riccati and Lyapunov solvers, the fixed-step
//! integration kernel and delayed-signal storage.
//!
//! Matrices are plain `nalgebra` dynamic matrices. Every public entry point
//! that accepts one rejects non-finite entries.

mod care;
mod expm;
mod history;
mod linalg;
mod lyapunov;
mod rk4;

pub use care::{care_residual, solve_care, CareSolution};
pub use expm::matrix_exponential;
pub use history::HistoryBuffer;
pub use linalg::{
    eigenvalues, ensure_finite, ensure_square, is_hurwitz, is_positive_definite, left_pseudo_inverse,
    matrix_from_rows, max_real_part, numerical_rank, spectral_abscissa_margin,
};
pub use lyapunov::solve_lyapunov;
pub use rk4::{rk4_step, rk4_step_into};

pub type Mat = nalgebra::DMatrix<f64>;
pub type Vector = nalgebra::DVector<f64>;
pub type Complex = nalgebra::Complex<f64>;

/// Normalized ARE residual accepted as a converged solution.
pub const TOL_CARE: f64 = 1e-9;
/// A matrix is Hurwitz when every eigenvalue has real part below `-TOL_HURWITZ`.
pub const TOL_HURWITZ: f64 = 1e-9;
/// Relative singular-value threshold for rank decisions.
pub const TOL_RANK: f64 = 1e-8;
