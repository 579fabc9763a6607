use std::path::PathBuf;

use corax_core::CoraxError;
use corax_service::ServiceError;

pub const EXIT_USAGE: i32 = 1;
pub const EXIT_UNDEFINED_METRIC: i32 = 2;
pub const EXIT_IO: i32 = 3;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Core(#[from] CoraxError),
    #[error(transparent)]
    Service(#[from] ServiceError),
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Io { .. } => EXIT_IO,
            CliError::Core(CoraxError::Io(_) | CoraxError::Image(_)) => EXIT_IO,
            CliError::Service(ServiceError::Io(_)) => EXIT_IO,
            CliError::Core(CoraxError::UndefinedMetric(_)) => EXIT_UNDEFINED_METRIC,
            _ => EXIT_USAGE,
        }
    }
}
