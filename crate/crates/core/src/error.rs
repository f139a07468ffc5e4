use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("level {level} exceeds the configured maximum level {max}")]
    LevelOverflow { level: usize, max: usize },

    #[error("observations `{first}` and `{second}` snap to the same lattice node ({node_x}, {node_y})")]
    DuplicateObservation {
        first: String,
        second: String,
        node_x: usize,
        node_y: usize,
    },

    #[error("observation `{name}` at ({x}, {y}) lies outside the domain")]
    ObservationOutsideDomain { name: String, x: f64, y: f64 },

    #[error("observation covariance is not positive definite (duplicate or near-duplicate observation points)")]
    ObservationCovarianceNotPd,

    #[error("circulant embedding not non-negative definite after {rounds} padding rounds (min eigenvalue {min_eigenvalue:e}, max {max_eigenvalue:e})")]
    EmbeddingNotPd {
        rounds: usize,
        min_eigenvalue: f64,
        max_eigenvalue: f64,
    },

    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("non-finite transmissivity in cell {cell} (log10 T = {log10_t})")]
    NonFiniteTransmissivity { cell: usize, log10_t: f64 },

    #[error("linear solver stopped after {iterations} iterations at relative residual {residual:e}")]
    SolverMaxIterations { iterations: usize, residual: f64 },

    #[error("particle tracking ended without reaching the site boundary: {0:?}")]
    Tracking(crate::transport::Termination),

    #[error("too many rejected samples on level {level}: {rejected} of {attempted}")]
    RejectionRate {
        level: usize,
        rejected: u64,
        attempted: u64,
    },

    #[error("bias target not met before reaching the level cap L = {max_level} (bias estimate {bias:e})")]
    LevelCapReached { max_level: usize, bias: f64 },

    #[error("need at least {needed} usable levels to fit rates, have {available}")]
    TooFewLevels { needed: usize, available: usize },

    #[error("cost theorem precondition alpha >= min(beta, gamma) / 2 violated (alpha = {alpha}, beta = {beta}, gamma = {gamma})")]
    CostTheoremCondition { alpha: f64, beta: f64, gamma: f64 },

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },

    #[error("unknown configuration key `{0}`")]
    UnknownKey(String),

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Short machine-readable category, used by the CLI for exit codes.
    pub fn category(&self) -> &'static str {
        match self {
            Error::InvalidParameter { .. }
            | Error::LevelOverflow { .. }
            | Error::UnknownKey(_)
            | Error::Config(_) => "config",
            Error::DuplicateObservation { .. }
            | Error::ObservationOutsideDomain { .. }
            | Error::EmptyDataset
            | Error::Parse { .. } => "data",
            Error::ObservationCovarianceNotPd
            | Error::EmbeddingNotPd { .. }
            | Error::DimensionMismatch { .. }
            | Error::NonFiniteTransmissivity { .. }
            | Error::SolverMaxIterations { .. }
            | Error::Tracking(_) => "numerical",
            Error::RejectionRate { .. }
            | Error::LevelCapReached { .. }
            | Error::TooFewLevels { .. }
            | Error::CostTheoremCondition { .. } => "estimation",
            Error::Io(_) | Error::Json(_) | Error::Csv(_) => "io",
        }
    }

    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}
