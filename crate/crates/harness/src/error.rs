use std::path::PathBuf;

use mfcl_core::MfclError;

pub type Result<T> = std::result::Result<T, HarnessError>;

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error(transparent)]
    Core(#[from] MfclError),
    #[error("{context}: {source}")]
    Context {
        context: String,
        #[source]
        source: Box<HarnessError>,
    },
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("configuration: {0}")]
    Config(String),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("toml: {0}")]
    Toml(#[from] toml::de::Error),
    #[error("fit: {0}")]
    Fit(String),
    #[error("unknown experiment `{0}`")]
    UnknownExperiment(String),
    #[error("input: {0}")]
    Input(String),
}

impl HarnessError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Self::Io { path: path.into(), source }
    }

    /// Innermost core error, if any.
    pub fn core(&self) -> Option<&MfclError> {
        match self {
            Self::Core(e) => Some(e),
            Self::Context { source, .. } => source.core(),
            _ => None,
        }
    }

    /// 2 for invariant violations, 3 for non-convergence, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self.core() {
            Some(MfclError::Invariant(_) | MfclError::NonFinite(_)) => 2,
            Some(MfclError::NonConvergence { .. }) => 3,
            _ => 1,
        }
    }
}

pub trait WithContext<T> {
    fn context(self, what: impl FnOnce() -> String) -> Result<T>;
}

impl<T, E: Into<HarnessError>> WithContext<T> for std::result::Result<T, E> {
    fn context(self, what: impl FnOnce() -> String) -> Result<T> {
        self.map_err(|e| HarnessError::Context { context: what(), source: Box::new(e.into()) })
    }
}
