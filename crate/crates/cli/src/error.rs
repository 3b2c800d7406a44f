use thiserror::Error;

/// Failures that end a run, each mapped to a process exit code.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("model error: {0}")]
    Model(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 1,
            CliError::Model(_) | CliError::Io(_) => 2,
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

/// Whether a library error means the model itself is unusable, as opposed
/// to one image being unsuitable.
pub fn is_model_failure(e: &cameras::Error) -> bool {
    matches!(
        e,
        cameras::Error::LayerNotFound(_)
            | cameras::Error::CaptureFailed(_)
            | cameras::Error::UnsupportedInput { .. }
    )
}

pub const EXIT_OK: i32 = 0;
pub const EXIT_PARTIAL: i32 = 3;
