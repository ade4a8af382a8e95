use serde::Serialize;
use spinmid::SpinError;

/// Failure classes of a CLI run, each with its own exit code.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),

    #[error("{context}: {source}")]
    Step {
        context: String,
        #[source]
        source: SpinError,
    },

    #[error("{0}")]
    Io(String),

    /// The run completed and its outputs were written, but some checks failed.
    #[error("checks failed: {}", .0.join(", "))]
    ChecksFailed(Vec<String>),
}

/// Machine-readable error record printed to stderr.
#[derive(Debug, Serialize)]
pub struct ErrorRecord<'a> {
    pub error: &'a str,
    pub message: String,
    pub exit_code: i32,
}

impl CliError {
    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Config(_) => "config",
            CliError::Step { .. } => "step",
            CliError::Io(_) => "io",
            CliError::ChecksFailed(_) => "checks_failed",
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::ChecksFailed(_) => 1,
            CliError::Config(_) => 2,
            CliError::Step { .. } => 3,
            CliError::Io(_) => 4,
        }
    }

    pub fn record(&self) -> ErrorRecord<'static> {
        ErrorRecord {
            error: self.kind(),
            message: self.to_string(),
            exit_code: self.exit_code(),
        }
    }

    pub fn step(context: impl Into<String>, source: SpinError) -> Self {
        CliError::Step {
            context: context.into(),
            source,
        }
    }

    pub fn io(what: impl std::fmt::Display, err: impl std::fmt::Display) -> Self {
        CliError::Io(format!("{what}: {err}"))
    }
}
