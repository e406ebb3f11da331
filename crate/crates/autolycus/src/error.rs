use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A CSV cell failed to parse; names the offending row and column.
    #[error("parse error at row {row}, column {column}: {message}")]
    Parse {
        row: usize,
        column: String,
        message: String,
    },

    /// A value violated its declared schema constraints.
    #[error("validation error: {0}")]
    Validation(String),

    /// The schema file itself is inconsistent or does not match the data.
    #[error("schema error: {0}")]
    Schema(String),

    /// A caller-supplied argument is out of range.
    #[error("argument error: {0}")]
    Argument(String),

    /// A requested synthetic domain exceeds the enumeration budget.
    #[error("capacity error: {0}")]
    Capacity(String),

    /// A numeric routine failed (e.g. singular normal matrix).
    #[error("numeric error: {0}")]
    Numeric(String),

    /// A serialized document is malformed; carries the node path.
    #[error("format error at {path}: {message}")]
    Format { path: String, message: String },

    /// The remote service could not be reached.
    #[error("transport error: {0}")]
    Transport(String),

    /// The remote service answered with a non-2xx status.
    #[error("protocol error (status {status}): {body}")]
    Protocol { status: u16, body: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
