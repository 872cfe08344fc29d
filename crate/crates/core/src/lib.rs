//! Semigroup functional calculus on finite weighted graphs.
//!
//! A weighted graph with a vertex measure is treated as a metric-measure
//! space: the metric is the shortest-path distance, balls are closed balls,
//! and integrals are measure-weighted vertex sums. On top of that geometry
//! the crate builds a nonnegative self-adjoint generator (combinatorial or
//! divergence-form Laplacian), its heat semigroup `e^{-tL}` and general
//! spectral functions `g(tL)`, and the multi-scale objects derived from
//! them: square functions, oscillation (BMO-type) norms, Carleson box
//! norms, trilinear forms and paraproducts, Muckenhoupt weight
//! characteristics, and an empirical hypothesis harness for singular
//! operators (off-diagonal decay, weak boundedness, action on constants).
//!
//! Every spectral operation has two routes: a dense eigenbasis path (the
//! oracle) and a matrix-free Chebyshev path; they are kept independent so
//! they can be checked against each other. All randomness flows through
//! labeled, seeded substreams so runs are reproducible bit-for-bit.

// Link the system BLAS so `ndarray::dot` and LAPACK calls route to it.
extern crate blas_src;

pub mod bmo;
pub mod error;
pub mod mixed_norm;
pub mod offdiag;
pub mod par;
pub mod paraproducts;
pub mod rng;
pub mod space;
pub mod spectral;
pub mod t1;
pub mod tol;
pub mod weights;

pub use error::{Error, Result};
pub use space::{Ball, GeometryReport, Space};
pub use spectral::{Generator, GeneratorKind, ScaleGrid, SpectralFunction};
