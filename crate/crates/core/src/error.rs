//! Error types shared across the library.

use thiserror::Error;

/// Errors produced by graph construction, density handling, the discrete
/// calculus, and the solvers built on top of them.
#[derive(Debug, Error)]
pub enum Error {
    #[error("graph is not connected: vertex {0} unreachable from root {1}")]
    DisconnectedGraph(usize, usize),

    #[error("nonpositive weight {weight} on edge ({i}, {j})")]
    NonpositiveWeight { i: usize, j: usize, weight: f64 },

    #[error("self-loop on vertex {0}")]
    SelfLoop(usize),

    #[error("duplicate edge ({0}, {1})")]
    DuplicateEdge(usize, usize),

    #[error("asymmetric weights on edge ({i}, {j}): {forward} vs {backward}")]
    AsymmetricWeights {
        i: usize,
        j: usize,
        forward: f64,
        backward: f64,
    },

    #[error("vertex index {index} out of range for {n} vertices")]
    VertexOutOfRange { index: usize, n: usize },

    #[error("invalid size for graph family: {0}")]
    InvalidSize(String),

    #[error("nonpositive entry {value} at vertex {index}")]
    NonpositiveEntry { index: usize, value: f64 },

    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("exponent underflow in Gibbs density: potential range {range} too wide for f64")]
    OverflowInExp { range: f64 },

    #[error("unsupported norm exponent {0}: finite exponents must be positive and even")]
    UnsupportedExponent(u32),

    #[error("nonpositive argument to log_mean: ({0}, {1})")]
    NonpositiveArgument(f64, f64),

    #[error("vector is not in the tangent space: pi-weighted sum {0:e} exceeds tolerance")]
    NotInTangentSpace(f64),

    #[error("linear solver failed: residual {residual:e} above tolerance {tol:e}")]
    SolverFailure { residual: f64, tol: f64 },

    #[error("continuity equation violated on segment {segment}: residual {residual:e}")]
    ContinuityViolation { segment: usize, residual: f64 },

    #[error("scenario rule undefined on truncation: {0}")]
    ScenarioUndefinedOnTruncation(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
