use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("config error in `{field}`: {message}")]
    Config { field: String, message: String },
    #[error("{context}: {source}")]
    Numeric {
        context: String,
        #[source]
        source: nubs::Error,
    },
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("failed to parse {}: {message}", path.display())]
    Parse { path: PathBuf, message: String },
}

impl HarnessError {
    pub fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Self::Config { field: field.into(), message: message.into() }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Self::Io { path: path.into(), source }
    }

    /// Process exit status for this error.
    pub fn exit_code(&self) -> u8 {
        match self {
            Self::Config { .. } | Self::Parse { .. } => 2,
            Self::Numeric { .. } => 3,
            Self::Io { .. } => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, HarnessError>;

/// Attaches sweep-point context to core errors.
pub trait Context<T> {
    fn context(self, what: impl FnOnce() -> String) -> Result<T>;
}

impl<T> Context<T> for nubs::Result<T> {
    fn context(self, what: impl FnOnce() -> String) -> Result<T> {
        self.map_err(|source| HarnessError::Numeric { context: what(), source })
    }
}
