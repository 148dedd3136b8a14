use thiserror::Error;

/// Failures of a CLI run, split by exit status.
#[derive(Debug, Error)]
pub enum CliError {
    /// Bad configuration, unreadable or invalid data, unwritable output.
    #[error("{0}")]
    Input(String),
    /// Fitting or region computation failed.
    #[error("{0}")]
    Numeric(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Numeric(_) => 1,
            CliError::Input(_) => 2,
        }
    }
}

impl From<multilink::Error> for CliError {
    fn from(e: multilink::Error) -> Self {
        use multilink::Error as E;
        match e {
            E::Io { .. } | E::Parse { .. } | E::Validation(_) | E::Dimension(_) => CliError::Input(e.to_string()),
            other => CliError::Numeric(other.to_string()),
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
