use thiserror::Error;

/// Errors raised by every module of the crate.
///
/// Variants are grouped by the exit class the CLI maps them onto:
/// configuration problems (exit 1) versus runtime failures (exit 2).
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("input {0} is outside the machine's input alphabet")]
    Rejected(String),

    #[error("numerical divergence at t = {t}: {detail}")]
    Divergence { t: f64, detail: String },

    #[error("singular parameters: {0}")]
    Singular(String),

    #[error("no settlement within {limit} time units")]
    NonConvergence { limit: f64 },

    #[error("inhibition half-cycle left {active} neuron(s) active in cycle {cycle}")]
    ResetFailure { cycle: usize, active: usize },

    #[error("cannot choose a winner from an empty score array")]
    NoSelection,

    #[error("associative memory full (capacity {capacity})")]
    MemoryFull { capacity: usize },

    #[error("program does not cover {} required pair(s): {}", .missing.len(), .missing.join(", "))]
    Coverage { missing: Vec<String> },

    #[error("step size too large: {0}")]
    StepSize(String),

    #[error("teacher fault: {0}")]
    TeacherFault(String),

    #[error("motor field has no association for input {input:?} at cycle {cycle}")]
    Stuck { cycle: usize, input: Vec<u32> },

    #[error("imagery has no association for input {input:?} at cycle {cycle}")]
    ImageryGap { cycle: usize, input: Vec<u32> },

    #[error("episode exceeded {0} cycles without halting")]
    NoHalt(usize),

    #[error("io error: {0}")]
    Io(String),
}

impl Error {
    /// True for errors caused by bad input rather than by a failed run.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::Config(_) | Error::Dimension { .. } | Error::Rejected(_) | Error::Singular(_)
        )
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
