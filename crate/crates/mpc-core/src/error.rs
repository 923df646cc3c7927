use alloc::string::String;

/// Error type shared across the core crate.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CoreError {
    /// Tensor or parameter shape mismatch.
    #[error("shape mismatch: {0}")]
    Shape(String),
    /// Argument outside the mathematical domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),
    /// Operation called before the state it depends on exists
    /// (e.g. backward before forward).
    #[error("state error: {0}")]
    State(String),
    /// A value that must be finite was NaN or infinite.
    #[error("non-finite value: {0}")]
    NonFinite(String),
    /// Structurally invalid input (labels out of range, empty sets, ...).
    #[error("invalid input: {0}")]
    Input(String),
    /// A metric is undefined on the given records (empty set, empty window).
    #[error("undefined metric: {0}")]
    UndefinedMetric(String),
    /// Malformed binary format (IDX parsing, checkpoints).
    #[error("format error: {0}")]
    Format(String),
    /// Training diverged (non-finite losses for a full epoch).
    #[error("divergence: {0}")]
    Divergence(String),
    /// Inconsistent configuration.
    #[error("config error: {0}")]
    Config(String),
}
