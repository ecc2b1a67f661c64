use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("invalid specification: {0}")]
    InvalidSpec(String),

    #[error("invalid topology: {0}")]
    InvalidTopology(String),

    #[error("singular system: {0}")]
    Singular(String),

    /// `p^T A p` was not strictly positive, so the CG step is undefined.
    #[error("numerically indefinite system at epoch {epoch}: pKtKp = {value:e}")]
    IndefiniteSystem { epoch: usize, value: f64 },

    #[error("residual diverged at epoch {epoch}")]
    Divergence { epoch: usize },

    #[error("shared seed checksum mismatch from party {party}")]
    SeedMismatch { party: u32 },

    #[error("missing data: {0}")]
    MissingData(String),

    #[error("provider {provider} unreachable for hospital {hospital}")]
    ProviderUnreachable { hospital: u32, provider: u32 },

    #[error("transport error: {0}")]
    Transport(String),

    #[error("protocol violation: {0}")]
    Protocol(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error("row {row}, column {column:?}: not a number: {value:?}")]
    Parse { row: usize, column: String, value: String },

    #[error("degenerate labels: every row has class {0:?}")]
    DegenerateLabels(String),

    #[error("unknown class value {value:?} at row {row}")]
    UnknownClass { row: usize, value: String },

    #[error("kernel is not invertible to distances: {0}")]
    NotInvertible(&'static str),
}
