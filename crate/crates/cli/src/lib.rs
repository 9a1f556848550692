//! Command-line driver for the `hfact` laboratory: configuration, the
//! subcommands and deterministic report emission.

pub mod commands;
pub mod config;
pub mod report;
pub mod suite;

use std::fmt;
use std::path::{Path, PathBuf};

pub use commands::{run_subcommand, Subcommand};
pub use config::{ExperimentConfig, Format, GridSpec, Prepared};
pub use report::{emit_report, Report};

/// Exit code for invalid configurations and inputs.
pub const EXIT_VALIDATION: i32 = 2;
/// Exit code for numerical failures such as diverging rounds.
pub const EXIT_NUMERICAL: i32 = 3;
/// Exit code for I/O failures.
pub const EXIT_IO: i32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Validation,
    Numerical,
    Io,
}

/// An error tagged with the configuration file it came from.
#[derive(Debug)]
pub struct CliError {
    pub kind: ErrorKind,
    pub path: PathBuf,
    pub source: hfact_core::Error,
}

impl CliError {
    pub fn io(path: &Path, source: hfact_core::Error) -> CliError {
        CliError {
            kind: ErrorKind::Io,
            path: path.to_path_buf(),
            source,
        }
    }

    pub fn validation(path: &Path, source: hfact_core::Error) -> CliError {
        CliError {
            kind: ErrorKind::Validation,
            path: path.to_path_buf(),
            source,
        }
    }

    /// Classifies a core error raised while running a subcommand.
    pub fn from_core(path: &Path, source: hfact_core::Error) -> CliError {
        let kind = if source.is_numerical() {
            ErrorKind::Numerical
        } else if matches!(source, hfact_core::Error::Io(_)) {
            ErrorKind::Io
        } else {
            ErrorKind::Validation
        };
        CliError {
            kind,
            path: path.to_path_buf(),
            source,
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self.kind {
            ErrorKind::Validation => EXIT_VALIDATION,
            ErrorKind::Numerical => EXIT_NUMERICAL,
            ErrorKind::Io => EXIT_IO,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.path.display(), self.source)
    }
}

impl std::error::Error for CliError {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        Some(&self.source)
    }
}
