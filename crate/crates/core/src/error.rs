use thiserror::Error;

#[derive(Debug, Error)]
pub enum CoreError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("warp shape parameters must be positive (alpha={alpha}, beta={beta})")]
    InvalidWarp { alpha: f64, beta: f64 },
    #[error("warp posterior factor must be lower triangular with positive diagonal")]
    InvalidPosterior,
    #[error("kernel matrix is not positive definite even with maximum jitter")]
    NotPositiveDefinite,
    #[error("model has not been trained")]
    Untrained,
    #[error("negative variance {0}")]
    NegativeVariance(f64),
    #[error("MES needs at least one max-value sample")]
    NoMaxSamples,
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("non-finite objective value {0}")]
    NonFiniteTarget(f64),
    #[error("report inputs cover different circuits: {0}")]
    DisjointCircuits(String),
    #[error(transparent)]
    Circuit(#[from] boapta_circuit::CircuitError),
    #[error(transparent)]
    Param(#[from] boapta_circuit::ParamError),
    #[error(transparent)]
    Parse(#[from] boapta_circuit::ParseError),
    #[error("i/o error on {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("malformed {what}: {message}")]
    Format { what: &'static str, message: String },
}

impl CoreError {
    pub fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Self::Io { path: path.as_ref().display().to_string(), source }
    }
}
