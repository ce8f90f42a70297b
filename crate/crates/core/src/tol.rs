//! Numerical tolerances used across the crate.
//!
//! Acceptance tests read from this table too, so retuning happens in one place.

/// Largest number of entries a dense data tensor may hold.
pub const MAX_TENSOR_ENTRIES: usize = 10_000_000;

/// Relative threshold below which singular values count as zero.
pub const RANK_RTOL: f64 = 1e-12;

/// Full-row-rank check for datasets: σ_min > this · σ_max.
pub const DATA_RANK_RTOL: f64 = 1e-10;

/// Off-diagonal convergence threshold for Jacobi sweeps.
pub const JACOBI_EPS: f64 = 1e-15;
pub const JACOBI_MAX_SWEEPS: usize = 100;

/// Root finding: |f(root) - target| <= ROOT_TOL * (1 + |target|).
pub const ROOT_TOL: f64 = 1e-12;
pub const ROOT_MAX_ITER: usize = 200;
/// Bracket expansion gives up beyond 2^60.
pub const BRACKET_LIMIT: f64 = 1_152_921_504_606_846_976.0;

/// Local error target of the adaptive RK4 used for the scalar ODE.
pub const ODE_LOCAL_TOL: f64 = 1e-14;
/// The scalar ODE table stops once h exceeds this value.
pub const ODE_H_CAP: f64 = 1e250;

/// Default absolute tolerance of adaptive quadrature.
pub const QUAD_TOL: f64 = 1e-11;

/// Reconstruction tolerance for orthogonal decompositions.
pub const DECOMP_TOL: f64 = 1e-10;
/// Unit-norm check for singular-vector inputs.
pub const UNIT_NORM_TOL: f64 = 1e-8;

/// A column is feasible for an enumeration solver if its residual is below this.
pub const ENUM_FEAS_TOL: f64 = 1e-9;

/// Newton solve for the Q-minimizer dual.
pub const NEWTON_MAX_STEPS: usize = 200;
/// Target residual ‖XSᵀρ − y‖ relative to 1 + ‖y‖.
pub const NEWTON_GRAD_TOL: f64 = 1e-13;
/// Residual, relative to 1 + ‖y‖ + ‖A‖·‖ρ‖, accepted once Newton steps stop
/// making progress.
pub const Q_FEAS_TOL: f64 = 1e-9;

/// Commutator norm for jointly diagonalizable sensing matrices.
pub const COMMUTE_TOL: f64 = 1e-10;
pub const JOINT_DIAG_TOL: f64 = 1e-8;

/// Relative gap below which two singular values count as tied.
pub const TIE_RTOL: f64 = 1e-9;

/// Exponents below this are treated as underflow in the exponential loss.
pub const EXP_UNDERFLOW: f64 = -700.0;
