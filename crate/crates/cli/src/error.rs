use std::process::ExitCode;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Data(#[from] egogaze::Error),
}

impl CliError {
    /// 1 usage, 2 bad data, 3 pipeline failure.
    pub fn exit_code(&self) -> ExitCode {
        match self {
            CliError::Usage(_) => ExitCode::from(1),
            CliError::Data(egogaze::Error::Pipeline { .. }) => ExitCode::from(3),
            CliError::Data(_) => ExitCode::from(2),
        }
    }
}

pub type CliResult<T = ()> = Result<T, CliError>;
