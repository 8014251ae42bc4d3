//! Library side of the `egodiff` command-line tool: configuration handling
//! and one function per subcommand, so the commands can be driven from tests.

pub mod commands;
pub mod config;

pub use config::RunConfig;

/// Failures grouped by exit code.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Bad flags or configuration (exit code 1).
    #[error("usage: {0}")]
    Usage(String),
    /// Missing, malformed or inconsistent files (exit code 2).
    #[error("data: {0}")]
    Data(String),
    /// Diverging solver or non-finite values (exit code 3).
    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Usage(_) => 1,
            Self::Data(_) => 2,
            Self::Numerical(_) => 3,
        }
    }
}

impl From<egodiff::Error> for CliError {
    fn from(e: egodiff::Error) -> Self {
        if e.is_numerical() {
            Self::Numerical(e.to_string())
        } else if matches!(e, egodiff::Error::Config(_)) {
            Self::Usage(e.to_string())
        } else {
            Self::Data(e.to_string())
        }
    }
}
