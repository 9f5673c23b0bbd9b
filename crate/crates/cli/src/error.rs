//! Stage-tagged errors and their process exit codes.

use std::fmt;

/// Exit status for each failure class.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitKind {
    /// Golden-reference mismatch or an internal failure.
    Failure = 1,
    /// Missing file, unparsable document, or input that does not fit the network.
    Input = 2,
    /// No design fits the platform.
    Infeasible = 3,
    /// The simulated pipeline stopped with work outstanding.
    Deadlock = 4,
}

#[derive(Debug)]
pub struct CliError {
    pub stage: &'static str,
    pub kind: ExitKind,
    pub message: String,
}

impl CliError {
    pub fn new(stage: &'static str, kind: ExitKind, message: impl Into<String>) -> Self {
        Self { stage, kind, message: message.into() }
    }

    pub fn input(stage: &'static str, message: impl Into<String>) -> Self {
        Self::new(stage, ExitKind::Input, message)
    }

    pub fn io(stage: &'static str, path: &std::path::Path, err: std::io::Error) -> Self {
        Self::input(stage, format!("{}: {err}", path.display()))
    }

    pub fn code(&self) -> i32 {
        self.kind as i32
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        // Always one line so callers can parse it.
        write!(f, "error[{}]: {}", self.stage, self.message.replace('\n', " "))
    }
}

impl std::error::Error for CliError {}

pub type Result<T> = std::result::Result<T, CliError>;
