use thiserror::Error;

/// Errors raised by the simulator and the optimizers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("numeric failure: {0}")]
    Numeric(String),

    /// The conic solver did not converge. Carries the bisection bracket when
    /// the failure happened inside a max-min solve.
    #[error("solver failure: {message} (bracket [{t_low}, {t_high}])")]
    SolverFailure {
        message: String,
        t_low: f64,
        t_high: f64,
    },

    #[error("drop {drop}: {source}")]
    Drop {
        drop: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
