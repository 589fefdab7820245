use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    /// A domain invariant on an input was violated (named field + reason).
    #[error("invalid `{field}`: {reason}")]
    InvalidParameter { field: &'static str, reason: String },

    /// Mission config file could not be parsed or failed validation.
    #[error("config error: {0}")]
    Config(String),

    /// Requested horizon burns more propellant than the vehicle carries.
    #[error("horizon t = {t} s exceeds the maximum burn time {max:.3} s")]
    FuelExhausted { t: f64, max: f64 },

    /// The conic solver reported a numerical failure (diagnostics verbatim).
    #[error("solver failure: {0}")]
    Solver(String),

    /// A candidate solution does not match the problem's variable layout.
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    /// Dataset file is malformed or inconsistent with its header.
    #[error("dataset error: {0}")]
    Dataset(String),

    /// Constraint-flag layout version in a file differs from this build's.
    #[error("layout version mismatch: file has v{found}, expected v{expected}")]
    LayoutVersion { found: u32, expected: u32 },

    /// An artifact was produced under a different mission configuration.
    #[error("mission config hash mismatch: {0}")]
    MissionHashMismatch(String),

    /// Model bundle is malformed or inconsistent with its configuration.
    #[error("model error: {0}")]
    Model(String),

    /// A forward pass produced non-finite activations.
    #[error("non-finite activations in {context} (layer {layer})")]
    NonFinite { layer: usize, context: String },

    /// Training loss became non-finite.
    #[error("training diverged at step {step}: loss is not finite")]
    Diverged { step: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
