use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    Dimension { expected: String, actual: String },

    #[error("unknown label `{label}` (known labels: {})", known.join(", "))]
    Vocabulary { label: String, known: Vec<String> },

    #[error("schedule error: {0}")]
    Schedule(String),

    #[error("degenerate density: {0}")]
    DegenerateDensity(String),

    #[error("non-finite state in trajectory {trajectory} at step {step}")]
    Divergence { trajectory: u64, step: usize },

    #[error("training diverged at epoch {epoch}: {message}")]
    TrainingDivergence { epoch: usize, message: String },

    #[error("undefined metric: {0}")]
    UndefinedMetric(String),

    #[error("format error in {field}: {message}")]
    Format { field: String, message: String },

    #[error("i/o error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn format(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Format {
            field: field.into(),
            message: message.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Short machine-parsable category, stable across releases.
    pub fn category(&self) -> &'static str {
        match self {
            Error::Config(_) | Error::Schedule(_) | Error::Dimension { .. } => "config",
            Error::Vocabulary { .. } => "vocabulary",
            Error::DegenerateDensity(_)
            | Error::Divergence { .. }
            | Error::TrainingDivergence { .. }
            | Error::UndefinedMetric(_) => "numeric",
            Error::Format { .. } => "format",
            Error::Io { .. } => "io",
        }
    }
}
