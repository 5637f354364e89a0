use thiserror::Error;

/// Exit status for a configuration problem.
pub const EXIT_CONFIG: i32 = 2;
/// Exit status when propagation failed (including failed scan cells).
pub const EXIT_INTEGRATION: i32 = 3;
/// Exit status when results could not be written.
pub const EXIT_OUTPUT: i32 = 4;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Read {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("{source_name}: {message}")]
    Syntax { source_name: String, message: String },

    #[error("{location}: `{key}` {message}")]
    Invalid {
        location: String,
        key: String,
        message: String,
    },

    #[error("override `{item}`: {message}")]
    Override { item: String, message: String },

    #[error("QHEOM_THREADS: {0}")]
    Threads(String),
}

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),

    /// The model rejected its settings before any propagation.
    #[error("{0}")]
    Setup(qheom::Error),

    #[error("integration failed: {0}")]
    Integration(qheom::Error),

    #[error("{failed} of {total} scan cells failed; see the status column")]
    ScanCells { failed: usize, total: usize },

    #[error("writing {path}: {message}")]
    Output { path: String, message: String },
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) | RunError::Setup(_) => EXIT_CONFIG,
            RunError::Integration(_) | RunError::ScanCells { .. } => EXIT_INTEGRATION,
            RunError::Output { .. } => EXIT_OUTPUT,
        }
    }
}

impl From<qheom::Error> for RunError {
    fn from(e: qheom::Error) -> Self {
        match e {
            qheom::Error::Io(io) => RunError::Output {
                path: String::new(),
                message: io.to_string(),
            },
            e if e.is_integration_failure() => RunError::Integration(e),
            e => RunError::Setup(e),
        }
    }
}
