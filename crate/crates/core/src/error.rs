use thiserror::Error;

/// Errors produced by the saliency toolkit.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("unsupported input of {channels}x{height}x{width}: {reason}")]
    UnsupportedInput {
        channels: usize,
        height: usize,
        width: usize,
        reason: String,
    },

    #[error("layer not found: {0}")]
    LayerNotFound(String),

    #[error("capture failed: {0}")]
    CaptureFailed(String),

    /// Every scale of a multi-scale schedule changed the predicted label.
    #[error("degenerate schedule: no scale kept label {label} (per-scale labels: {per_scale:?})")]
    DegenerateSchedule {
        label: usize,
        per_scale: Vec<((usize, usize), usize)>,
    },

    #[error("undefined density: saliency mass is zero")]
    UndefinedDensity,

    #[error("attack diverged at iteration {iteration}: non-finite gradient")]
    AttackDiverged { iteration: usize },

    #[error("attacks not comparable: {0}")]
    NotComparable(String),

    #[error("sanity check inconclusive: {0}")]
    SanityInconclusive(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
