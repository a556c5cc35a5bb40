use alloc::string::String;

/// Errors raised anywhere in the core crate.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("shape mismatch at node {node} ({op}): {detail}")]
    Shape {
        node: usize,
        op: &'static str,
        detail: String,
    },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("input `{0}` is not bound")]
    UnboundInput(String),
    #[error("backward needs a scalar root, got a {rows}x{cols} value")]
    NonScalarRoot { rows: usize, cols: usize },
    #[error("learning rate must be positive, got {0}")]
    InvalidLearningRate(f64),
    #[error(
        "cholesky factorization failed after jitter escalation (condition estimate {condition:e})"
    )]
    Cholesky { condition: f64 },
    #[error("posterior variance {0:e} is negative beyond tolerance")]
    NegativeVariance(f64),
    #[error("all labels are identical, lambda is unconstrained")]
    LambdaUnconstrained,
    #[error("coincident inputs with distinct labels force lambda to zero")]
    LambdaDegenerate,
    #[error("no unchosen candidate left in the pool")]
    ExhaustedPool,
    #[error("unknown benchmark `{0}`")]
    UnknownBenchmark(String),
    #[error("pixel {index} has non-binary value {value}")]
    NonBinaryPixel { index: usize, value: f64 },
    #[error("seed traces have different lengths ({0} vs {1})")]
    RaggedSeeds(usize, usize),
    #[error("standard error needs at least two seeds, got {0}")]
    TooFewSeeds(usize),
    #[error("empty input set")]
    Empty,
    #[error("invalid configuration: {0}")]
    Config(String),
}

pub type Result<T, E = Error> = core::result::Result<T, E>;
