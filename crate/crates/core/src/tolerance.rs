//! Numerical thresholds used across the crate.
//!
//! Every tolerance the library or its test suites compare against lives
//! here so the numbers stay consistent between code paths.

/// `max |Q^T Q - I|` allowed for an orthogonal matrix.
pub const ORTHOGONALITY: f64 = 1e-12;

/// `|det Q - 1|` allowed for a rotation.
pub const ROTATION_DET: f64 = 1e-9;

/// `max |Q^T Λ Q - Λ|` allowed for a Lorentz matrix.
pub const LORENTZ_FORM: f64 = 1e-9;

/// Symmetry of a Gram matrix.
pub const GRAM_SYMMETRY: f64 = 1e-12;

/// Most negative eigenvalue accepted as positive semidefinite.
pub const PSD_EIGEN_FLOOR: f64 = -1e-9;

/// Relative lightlike threshold: `|<u,u>| < LIGHTLIKE * |u|^2`.
pub const LIGHTLIKE: f64 = 1e-10;

/// Maximum lightlike restarts in Minkowski Gram–Schmidt.
pub const MAX_LIGHTLIKE_RESTARTS: usize = 50;

/// Relative residual below which an input vector counts as dependent.
pub const LINEAR_DEPENDENCE: f64 = 1e-10;

/// Alternating least squares: stop when the objective drops by less.
pub const ALS_DECREASE: f64 = 1e-12;

/// Alternating least squares iteration cap.
pub const ALS_MAX_ITERATIONS: usize = 500;

/// Relative RMS misfit on sampled entries that counts as a consistent
/// completion.
pub const ALS_FIT: f64 = 1e-9;

/// Largest tuple length for explicit permutation averaging (8! orbits).
pub const MAX_AVERAGING_N: usize = 8;

/// Euclidean-group certification threshold.
pub const EQUIVARIANCE_EUCLIDEAN: f64 = 1e-9;

/// Lorentz/Poincaré certification threshold.
pub const EQUIVARIANCE_LORENTZ: f64 = 1e-8;
