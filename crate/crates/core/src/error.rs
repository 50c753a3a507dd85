use thiserror::Error;

/// Errors raised across the library.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument is outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    DimensionMismatch {
        context: &'static str,
        expected: String,
        actual: String,
    },

    /// A caller-side contract was violated (e.g. a single-user operation
    /// invoked on a multi-user channel set).
    #[error("contract violation: {0}")]
    Contract(String),

    /// The effective channel matrix does not have full column rank, so a
    /// left pseudo-inverse (and hence zero-forcing) does not exist.
    #[error("rank-deficient channel: rank {rank} < {required}")]
    RankDeficient { rank: usize, required: usize },

    /// The effective channel vanished, so no receive direction is defined.
    #[error("degenerate channel: {0}")]
    DegenerateChannel(String),

    #[error("sdp solver: {0}")]
    Sdp(#[from] crate::sdp::SdpError),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn dim_mismatch(
    context: &'static str,
    expected: impl ToString,
    actual: impl ToString,
) -> Error {
    Error::DimensionMismatch {
        context,
        expected: expected.to_string(),
        actual: actual.to_string(),
    }
}
