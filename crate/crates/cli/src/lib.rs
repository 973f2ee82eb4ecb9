//! Command layer of the `wforge` binary: configuration, initial-data
//! expressions and the construct/verify/degree/report subcommands.

pub mod commands;
pub mod config;
pub mod expr;

use std::fmt;

pub use commands::{construct, degree, report, verify, DegreeArgs, Overrides};
pub use config::{ConfigError, RunConfig};

/// Everything a subcommand can fail with.
#[derive(Debug)]
pub enum CliError {
    Config(ConfigError),
    Core(wforge_core::Error),
    Io(String),
}

impl CliError {
    /// 2 config, 3 precondition, 4 non-convergence, 5 I/O, 1 anything else.
    pub fn exit_code(&self) -> i32 {
        use wforge_core::Error as E;
        match self {
            CliError::Config(_) => 2,
            CliError::Io(_) => 5,
            CliError::Core(e) => match e.root() {
                E::Parameter(_) | E::Argument(_) | E::InvalidDomain(_) | E::UnsupportedOrder { .. } => 2,
                E::Precondition(_) | E::InsufficientExtension { .. } | E::NotPositiveDefinite { .. } | E::DegreeUndefined { .. } => 3,
                E::NonConvergence { .. } | E::DecayViolation { .. } => 4,
                E::Io(_) | E::Format { .. } => 5,
                _ => 1,
            },
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(e) => write!(f, "config error: {e}"),
            CliError::Core(e) => write!(f, "{e}"),
            CliError::Io(e) => write!(f, "i/o error: {e}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Config(e)
    }
}

impl From<wforge_core::Error> for CliError {
    fn from(e: wforge_core::Error) -> Self {
        CliError::Core(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}
