use thiserror::Error;

/// Errors raised by the simulator and its optimizers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("constraint violation: {0}")]
    ConstraintViolation(String),

    #[error("coincident endpoints: tx {tx} and rx {rx} are {distance} m apart")]
    Singularity { tx: usize, rx: usize, distance: f64 },

    #[error("degenerate channel: {0}")]
    DegenerateChannel(String),

    #[error("infeasible budget: {budget} active elements requested but only {capacity} grid locations")]
    InfeasibleBudget { budget: usize, capacity: usize },

    #[error("undefined metric: {0}")]
    UndefinedMetric(String),

    #[error("config error at `{path}`: {message}")]
    Config { path: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn config(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            path: path.into(),
            message: message.into(),
        }
    }

    /// Process exit code used by the command line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config { .. } | Error::InfeasibleBudget { .. } => 2,
            Error::DegenerateChannel(_) | Error::Singularity { .. } | Error::UndefinedMetric(_) => 3,
            _ => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
