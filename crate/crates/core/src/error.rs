//! Crate-wide error type.

/// Errors shared by all modules. Degenerate but recoverable situations
/// (non-convergence of iterative estimators, saturated ball radii) are
/// reported through flags on the result types instead.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("graph is not connected: vertex {0} is unreachable from vertex 0")]
    DisconnectedGraph(usize),
    #[error("non-positive edge length {len} on edge ({u}, {v})")]
    NonPositiveWeight { u: usize, v: usize, len: f64 },
    #[error("non-positive measure {mass} at vertex {vertex}")]
    NonPositiveMeasure { vertex: usize, mass: f64 },
    #[error("duplicate edge ({0}, {1})")]
    DuplicateEdge(usize, usize),
    #[error("self loop at vertex {0}")]
    SelfLoop(usize),
    #[error("graph has no vertices")]
    EmptyGraph,
    #[error("ball has no members")]
    EmptyBall,
    #[error("dense spectral path supports at most {cap} vertices, graph has {n}")]
    DenseCapExceeded { n: usize, cap: usize },
    #[error("divergence-form coefficient {coeff} on edge {edge} is not positive")]
    EllipticityViolation { edge: usize, coeff: f64 },
    #[error("spectral function `{name}` is not finite at argument {arg}")]
    FunctionDomainError { name: String, arg: f64 },
    #[error("scale grid is empty or malformed: {0}")]
    EmptyGrid(String),
    #[error("input has no component orthogonal to constants")]
    ZeroInput,
    #[error("no ball pairs separated by at least {min_sep} exist at scale {scale}")]
    NoSeparatedPairs { scale: f64, min_sep: f64 },
    #[error("kernel profile is not finite at ({row}, {col})")]
    SingularSpec { row: usize, col: usize },
    #[error("weight has non-positive entry {value} at vertex {vertex}")]
    SingularWeight { vertex: usize, value: f64 },
    #[error("chebyshev expansion of `{name}` needs degree beyond {max_degree} for tolerance {tol}")]
    ChebyshevDegree { name: String, tol: f64, max_degree: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("eigen cache: {0}")]
    Cache(String),
    #[error("linear algebra backend: {0}")]
    Backend(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("graph text format, line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

pub type Result<T> = std::result::Result<T, Error>;
