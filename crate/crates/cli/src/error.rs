use std::fmt;
use std::path::Path;

use isfno_core::Error;

pub const EXIT_USAGE: u8 = 2;
pub const EXIT_DIVERGED: u8 = 3;
pub const EXIT_IO: u8 = 4;

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Io(String),
    Core(Error),
}

impl CliError {
    pub fn usage(msg: impl Into<String>) -> Self {
        CliError::Usage(msg.into())
    }

    pub fn io(path: &Path, e: impl fmt::Display) -> Self {
        CliError::Io(format!("{}: {e}", path.display()))
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Io(_) => EXIT_IO,
            CliError::Core(e) => core_exit_code(e),
        }
    }
}

pub fn core_exit_code(e: &Error) -> u8 {
    match e {
        Error::Generation { source, .. } => core_exit_code(source),
        Error::Divergence { .. }
        | Error::ForwardDivergence { .. }
        | Error::NonFiniteGradient { .. }
        | Error::TrainingDivergence { .. }
        | Error::Numerical(_)
        | Error::Singular(_)
        | Error::DegenerateTarget
        | Error::DegenerateStatistic(_) => EXIT_DIVERGED,
        Error::Io(_) | Error::Json(_) | Error::Format(_) => EXIT_IO,
        Error::Shape(_)
        | Error::CutoffTooLarge { .. }
        | Error::Contract(_)
        | Error::Stiffness(_)
        | Error::Unsupported(_)
        | Error::Config(_) => EXIT_USAGE,
        Error::MissingNode => 1,
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Io(m) => f.write_str(m),
            CliError::Core(e) => write!(f, "{e}"),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Core(e)
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Io(e.to_string())
    }
}
