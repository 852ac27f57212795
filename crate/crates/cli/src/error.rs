use std::fmt;

use encbench_core::bench::BenchError;
use encbench_core::checkpoint::CheckpointError;
use encbench_core::golden::GoldenError;

pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_FETCH: i32 = 3;
pub const EXIT_LOAD: i32 = 4;
pub const EXIT_VERIFY: i32 = 5;

/// An error with the process exit code it maps to.
#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    pub fn new(code: i32, message: impl Into<String>) -> CliError {
        CliError {
            code,
            message: message.into(),
        }
    }

    pub fn usage(message: impl Into<String>) -> CliError {
        CliError::new(EXIT_USAGE, message)
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<CheckpointError> for CliError {
    fn from(e: CheckpointError) -> CliError {
        let code = if e.is_fetch_error() { EXIT_FETCH } else { EXIT_LOAD };
        CliError::new(code, e.to_string())
    }
}

impl From<BenchError> for CliError {
    fn from(e: BenchError) -> CliError {
        let code = match e {
            BenchError::UnknownOp(_) | BenchError::InvalidSpec(_) | BenchError::MissingBackend { .. } => EXIT_USAGE,
            BenchError::EmptyCorpus | BenchError::Model { .. } | BenchError::Tokenizer { .. } => EXIT_LOAD,
            _ => EXIT_FAILURE,
        };
        CliError::new(code, e.to_string())
    }
}

impl From<GoldenError> for CliError {
    fn from(e: GoldenError) -> CliError {
        match e {
            GoldenError::Checkpoint(c) => c.into(),
            other => CliError::new(EXIT_LOAD, other.to_string()),
        }
    }
}
