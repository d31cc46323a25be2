use std::fmt;

/// Failure classes with distinct exit codes.
#[derive(Debug)]
pub enum CliError {
    Config(String),
    MissingInput(String),
    Other(anyhow::Error),
}

impl CliError {
    pub fn missing(msg: impl Into<String>) -> Self {
        CliError::MissingInput(msg.into())
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::MissingInput(_) => 3,
            CliError::Other(_) => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "configuration error: {m}"),
            CliError::MissingInput(m) => write!(f, "missing input: {m}"),
            CliError::Other(e) => write!(f, "{e:#}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<featleak::Error> for CliError {
    fn from(e: featleak::Error) -> Self {
        match e {
            featleak::Error::Config(m) => CliError::Config(m),
            featleak::Error::Dataset(m) => CliError::MissingInput(m),
            featleak::Error::Io(io) if io.kind() == std::io::ErrorKind::NotFound => CliError::MissingInput(io.to_string()),
            other => CliError::Other(other.into()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        featleak::Error::from(e).into()
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Other(e.into())
    }
}

pub type CliResult<T> = Result<T, CliError>;
