use thiserror::Error;

pub type Result<T> = std::result::Result<T, DialError>;

#[derive(Debug, Error)]
pub enum DialError {
    #[error("shape mismatch in `{op}`: {lhs:?} vs {rhs:?}")]
    Shape {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },

    #[error("expected a scalar, got shape {0:?}")]
    NotScalar(Vec<usize>),

    #[error("unknown graph node {0}")]
    UnknownNode(usize),

    #[error("activation `{0}` has no registered second derivative")]
    NoSecondDerivative(&'static str),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid config: {0}")]
    Config(String),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("size mismatch: {0} vs {1}")]
    SizeMismatch(usize, usize),

    #[error("assignment solver capped at {cap} points, got {n}; subsample first")]
    TooLarge { n: usize, cap: usize },

    #[error("power iteration did not converge after {iters} iterations (residual {residual:e})")]
    NoConvergence { iters: usize, residual: f64 },

    #[error("non-finite {component} at step {step}")]
    NonFinite { step: u64, component: &'static str },

    #[error("degenerate input: {0}")]
    Degenerate(&'static str),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}
