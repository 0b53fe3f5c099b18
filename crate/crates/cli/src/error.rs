use std::path::PathBuf;

use iltber_core::Error as CoreError;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_PARSE: i32 = 2;
pub const EXIT_INSUFFICIENT: i32 = 3;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{path}: {source}")]
    Input { path: PathBuf, source: CoreError },
    #[error("cannot read {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("cannot write {path}: {source}")]
    Write { path: PathBuf, source: std::io::Error },
    #[error("insufficient data: {0}")]
    Insufficient(String),
    #[error(transparent)]
    Core(#[from] CoreError),
}

impl CliError {
    pub fn usage(msg: impl Into<String>) -> Self {
        Self::Usage(msg.into())
    }

    pub fn write(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Self::Write { path: path.into(), source }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Usage(_) => EXIT_USAGE,
            Self::Input { source, .. } => core_exit_code(source),
            Self::Read { .. } => EXIT_PARSE,
            Self::Write { .. } => EXIT_USAGE,
            Self::Insufficient(_) => EXIT_INSUFFICIENT,
            Self::Core(e) => core_exit_code(e),
        }
    }
}

fn core_exit_code(e: &CoreError) -> i32 {
    match e {
        CoreError::NoRecords | CoreError::Parse { .. } | CoreError::DuplicateKey { .. } => EXIT_PARSE,
        CoreError::InsufficientData { .. }
        | CoreError::DegenerateFit
        | CoreError::Empty(_)
        | CoreError::NotFound(_) => EXIT_INSUFFICIENT,
        CoreError::Domain(_) | CoreError::Config(_) => EXIT_USAGE,
    }
}

pub type CliResult<T> = Result<T, CliError>;
