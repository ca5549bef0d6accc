//! Command-line driver for `hyperhead-core`: invariant suites, micro-training,
//! pool inspection, label parsing and operation counts.

pub mod cli;
pub mod commands;
pub mod config;
pub mod output;
pub mod parallel;

use std::fmt;

/// Failure classes, each with its own process exit code.
#[derive(Debug)]
pub enum CliError {
    /// Bad flags, config keys, labels or infeasible settings (exit 2).
    Usage(String),
    /// An invariant suite or a bench bound failed (exit 1).
    Invariant(String),
    /// Non-finite values, divergence or IO at run time (exit 3).
    Runtime(anyhow::Error),
}

impl CliError {
    pub fn code(&self) -> u8 {
        match self {
            CliError::Invariant(_) => 1,
            CliError::Usage(_) => 2,
            CliError::Runtime(_) => 3,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Invariant(m) => write!(f, "invariant failure: {m}"),
            CliError::Runtime(e) => write!(f, "runtime failure: {e:#}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<hyperhead_core::Error> for CliError {
    fn from(e: hyperhead_core::Error) -> Self {
        use hyperhead_core::Error as E;
        match e {
            E::Parse { .. } | E::Config(_) | E::Task(_) | E::Range { .. } => CliError::Usage(e.to_string()),
            E::NonFinite(_) | E::Dimension { .. } | E::EmptyContext => CliError::Runtime(e.into()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(e.into())
    }
}

pub type CliResult<T> = Result<T, CliError>;
