use thiserror::Error;

/// Errors raised by model construction, simulation and the value solver.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("sample count mismatch for {what}: expected {expected}, got {got}")]
    LengthMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("time {0} is not a grid node in the admissible range")]
    OffGrid(f64),

    #[error("ill-posed objective: {0}")]
    IllPosed(String),

    #[error("exhaustive search budget exceeded: {0} candidates")]
    Budget(u128),

    #[error("feedback map has no finite maximizer (unbounded direction)")]
    Unbounded,

    #[error("solver failed: {0}")]
    Solver(String),

    #[error("{}", config_message(*line, key, msg))]
    Config { line: usize, key: String, msg: String },

    #[error("{path}: {msg}")]
    Io { path: String, msg: String },
}

/// Line 0 marks errors that belong to no line (missing keys).
fn config_message(line: usize, key: &str, msg: &str) -> String {
    if line == 0 {
        format!("{key}: {msg}")
    } else {
        format!("line {line}: {key}: {msg}")
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_finite(values: &[f64], what: &'static str) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what))
    }
}

pub(crate) fn check_len(values: &[f64], expected: usize, what: &'static str) -> Result<()> {
    if values.len() == expected {
        Ok(())
    } else {
        Err(Error::LengthMismatch {
            what,
            expected,
            got: values.len(),
        })
    }
}
