use thiserror::Error;

/// Errors raised across the crate.
///
/// Weight-matrix variants name the coupling assumption they violate
/// (non-negative, doubly stochastic, symmetric, positive diagonal, connected).
#[derive(Debug, Error)]
pub enum Error {
    #[error("weight matrix must be square with n >= 2, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },

    #[error("coupling assumption violated (non-negative weights): w[{i}][{j}] = {value}")]
    NegativeEntry { i: usize, j: usize, value: f64 },

    #[error("coupling assumption violated (symmetric): w[{i}][{j}] != w[{j}][{i}] (gap {gap:e})")]
    NotSymmetric { i: usize, j: usize, gap: f64 },

    #[error("coupling assumption violated (doubly stochastic): {kind} {index} sums to {sum}")]
    NotDoublyStochastic {
        kind: &'static str,
        index: usize,
        sum: f64,
    },

    #[error("coupling assumption violated (positive diagonal): w[{i}][{i}] = {value}")]
    NonPositiveDiagonal { i: usize, value: f64 },

    #[error("coupling assumption violated (connected graph): agent {unreached} unreachable from agent 0")]
    Disconnected { unreached: usize },

    #[error("parameter `{name}` = {value} out of range: {expected}")]
    OutOfRange {
        name: &'static str,
        value: f64,
        expected: &'static str,
    },

    #[error("rendezvous problem needs at least two targets")]
    EmptyTargets,

    #[error("linear system is singular")]
    SingularSystem,

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("index error: {0}")]
    IndexError(String),

    #[error("hypothesis violated: {0}")]
    HypothesisViolated(String),

    #[error("no convergence case matches p = {p}, q = {q}")]
    NoCaseMatches { p: f64, q: f64 },

    #[error("bound system is not contractive: spectral radius {rho_a} >= 1")]
    NotContractive { rho_a: f64 },

    #[error("stepsize {alpha} exceeds the admissible bound {bound} at rho_w = {rho_w}, rho_wo = {rho_wo}")]
    StepsizeTooLarge {
        alpha: f64,
        bound: f64,
        rho_w: f64,
        rho_wo: f64,
    },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
