use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad flag combinations found after parsing.
    #[error("{0}")]
    Usage(String),
    /// Unreadable, malformed, or incompatible inputs and outputs.
    #[error("{0}")]
    Data(String),
    /// Training diverged.
    #[error("{0}")]
    Numeric(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Data(_) => 3,
            CliError::Numeric(_) => 4,
        }
    }
}

impl From<rdr_core::Error> for CliError {
    fn from(e: rdr_core::Error) -> Self {
        match e {
            rdr_core::Error::NonFiniteLoss { .. } => CliError::Numeric(e.to_string()),
            other => CliError::Data(other.to_string()),
        }
    }
}

pub(crate) fn data(msg: impl Into<String>) -> CliError {
    CliError::Data(msg.into())
}
