use std::io;
use std::path::Path;

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    /// Every problem found in a configuration, one per entry.
    #[error("invalid configuration:\n  {}", .0.join("\n  "))]
    Config(Vec<String>),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("analysis error: {0}")]
    Analysis(String),
    #[error("{path}: {msg}")]
    Format { path: String, msg: String },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: io::Error,
    },
    #[error(transparent)]
    Core(#[from] epinet_core::Error),
}

pub type Result<T> = std::result::Result<T, HarnessError>;

impl HarnessError {
    pub fn io(path: impl AsRef<Path>, source: io::Error) -> Self {
        HarnessError::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    pub fn format(path: impl AsRef<Path>, msg: impl Into<String>) -> Self {
        HarnessError::Format {
            path: path.as_ref().display().to_string(),
            msg: msg.into(),
        }
    }

    /// Process exit status: 2 configuration, 3 numerical, 4 analysis, 1 other.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config(_) | HarnessError::Core(epinet_core::Error::Config(_)) => 2,
            HarnessError::Numerical(_) | HarnessError::Core(epinet_core::Error::Numerical(_)) => 3,
            HarnessError::Analysis(_) => 4,
            _ => 1,
        }
    }
}
