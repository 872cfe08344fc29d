//! Named tolerances used across the crate and its test suites.
//!
//! Keeping them in one place documents why each bound is what it is and
//! keeps unit tests, integration tests, and the acceptance suite in sync.

/// Identities that hold in exact arithmetic and are computed by the same
/// code path on both sides (pure round-off).
pub const EXACT: f64 = 1e-12;

/// Identities routed through an eigendecomposition (round-off amplified by
/// the conditioning of the eigenbasis).
pub const SPECTRAL: f64 = 1e-10;

/// Agreement between the dense eigenbasis route and the matrix-free
/// Chebyshev route, relative to the input norm.
pub const DUAL_ROUTE: f64 = 1e-8;

/// Duality identities between trilinear forms and paraproducts.
pub const DUALITY: f64 = 1e-9;

/// Uniform error target for adaptive Chebyshev expansions.
pub const CHEBYSHEV: f64 = 1e-9;

/// Quadrature against closed-form scale integrals on the default grid.
pub const QUADRATURE_ANALYTIC: f64 = 1e-4;

/// Power-iteration convergence for operator-norm estimates.
pub const POWER_ITERATION: f64 = 1e-8;

/// Eigenvalues below `KERNEL_CUT * lambda_max` are treated as the kernel
/// of the generator (connected graphs have a one-dimensional kernel).
pub const KERNEL_CUT: f64 = 1e-12;
