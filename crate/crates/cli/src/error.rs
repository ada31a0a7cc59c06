use std::fmt;

/// Failure domains, each with its own process exit code: configuration
/// problems (2), input-data problems (3), numerical failures (4).
#[derive(Debug)]
pub enum CliError {
    Config(String),
    Data(String),
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
            CliError::Numerical(_) => 4,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "config error: {m}"),
            CliError::Data(m) => write!(f, "data error: {m}"),
            CliError::Numerical(m) => write!(f, "numerical failure: {m}"),
        }
    }
}

impl std::error::Error for CliError {}

/// Core errors surfacing during computation count as numerical failures;
/// validation paths wrap them explicitly instead.
impl From<qfkernels::Error> for CliError {
    fn from(e: qfkernels::Error) -> Self {
        CliError::Numerical(e.to_string())
    }
}

pub fn config_err(e: impl fmt::Display) -> CliError {
    CliError::Config(e.to_string())
}

pub fn data_err(e: impl fmt::Display) -> CliError {
    CliError::Data(e.to_string())
}

pub type Result<T> = std::result::Result<T, CliError>;
