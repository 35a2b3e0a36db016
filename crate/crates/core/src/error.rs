use thiserror::Error;

/// Errors raised by the laboratory.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid distribution: {0}")]
    InvalidPmf(String),

    #[error("invalid law: {0}")]
    InvalidLaw(String),

    /// The law has P(X >= 2) = 0; the recursion is trivial for it.
    #[error("degenerate law: P(X >= 2) = 0 ({0}); pass allow_degenerate to accept it")]
    DegenerateLaw(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("support of length {requested} exceeds the fft size limit {limit}")]
    FftTooLarge { requested: usize, limit: usize },

    #[error("support of length {requested} exceeds the exact-evolution limit {limit}")]
    SupportTooLarge { requested: usize, limit: usize },

    #[error("generation {generation}: truncated tilted mass {lost_tilted:e} exceeds hard cap {cap:e}")]
    TruncationBudget {
        generation: usize,
        lost_tilted: f64,
        cap: f64,
    },

    /// Tilted weights exceed the double range; supercritical laws grow like `2^n`.
    #[error("generation {generation}: tilted weights overflow at support {k_max}")]
    TiltedOverflow { generation: usize, k_max: usize },

    #[error("depth {depth} exceeds the configured maximum {max}")]
    DepthBudget { depth: usize, max: usize },

    #[error("enumeration of {configurations} configurations exceeds the budget {budget}")]
    EnumerationBudget { configurations: f64, budget: f64 },

    #[error("target root value {target} is unreachable at depth {depth} (max {max})")]
    Unreachable { target: u64, depth: usize, max: u64 },

    #[error("rejection sampling gave up after {attempts} attempts ({accepted} accepted, rate {rate:e})")]
    AttemptsExhausted {
        attempts: u64,
        accepted: u64,
        rate: f64,
    },

    #[error("limit tree exceeded {budget} nodes (x = {x}, eta = {eta})")]
    NodeBudget { budget: usize, x: f64, eta: f64 },

    #[error("non-finite value at x = {x}")]
    NonFinite { x: f64 },

    #[error("fit: {0}")]
    Fit(String),

    #[error("config: {0}")]
    Config(String),

    #[error("unknown experiment `{0}` (see `dr-lab list-experiments`)")]
    UnknownExperiment(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
