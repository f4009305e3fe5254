use std::path::PathBuf;

/// Errors produced anywhere in the editing engine.
///
/// Each variant maps onto one of the process exit codes used by the
/// command-line front end, see [`Error::exit_code`].
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    Dimension { expected: String, found: String },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("format error: {0}")]
    Format(String),

    #[error("length error: expected {expected} payload values, found {found}")]
    Length { expected: usize, found: usize },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("unknown condition id {0}")]
    Condition(usize),

    #[error("trajectory has no entry for step {0}")]
    Trajectory(usize),

    #[error("config error: {0}")]
    Config(String),

    #[error("transport error talking to {endpoint}: {message}")]
    Transport { endpoint: String, message: String },

    #[error("protocol error: {0}")]
    Protocol(String),

    #[error("analysis error: {0}")]
    Analysis(String),

    #[error("segmentation error: {0}")]
    Segmentation(String),

    #[error("numerical error: {0}")]
    Numerical(String),

    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn dims(expected: impl std::fmt::Display, found: impl std::fmt::Display) -> Self {
        Error::Dimension {
            expected: expected.to_string(),
            found: found.to_string(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code: 2 config, 3 I/O or format, 4 service, 5 numerical.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Domain(_) | Error::Condition(_) => 2,
            Error::Format(_) | Error::Length { .. } | Error::Io { .. } | Error::Dimension { .. } => 3,
            Error::Transport { .. } | Error::Protocol(_) | Error::Analysis(_) | Error::Segmentation(_) => 4,
            Error::Numerical(_) | Error::Trajectory(_) => 5,
            Error::Stage { source, .. } => source.exit_code(),
        }
    }

    /// Unwraps any stage tags down to the originating error.
    pub fn root(&self) -> &Error {
        match self {
            Error::Stage { source, .. } => source.root(),
            other => other,
        }
    }
}

pub(crate) trait StageExt<T> {
    fn stage(self, stage: &'static str) -> Result<T>;
}

impl<T> StageExt<T> for Result<T> {
    fn stage(self, stage: &'static str) -> Result<T> {
        self.map_err(|e| Error::Stage {
            stage,
            source: Box::new(e),
        })
    }
}
