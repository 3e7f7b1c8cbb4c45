//! CLI error taxonomy. Exit codes: 0 success, 2 configuration error,
//! 3 numerical failure, 1 anything else (I/O).

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),

    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("ragged rows: row {row} has {got} fields, expected {expected}")]
    RaggedRows {
        row: usize,
        expected: usize,
        got: usize,
    },

    #[error("unmappable label {value} at row {row}; expected -1, 0 or 1")]
    UnmappableLabel { value: String, row: usize },

    #[error("numerical failure: {0}")]
    Numerical(#[from] epfree_core::CoreError),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_)
            | CliError::Parse { .. }
            | CliError::RaggedRows { .. }
            | CliError::UnmappableLabel { .. } => 2,
            CliError::Numerical(_) => 3,
            CliError::Io(_) => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
