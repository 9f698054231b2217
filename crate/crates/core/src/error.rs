use thiserror::Error;

/// Errors raised by the simulation engine.
#[derive(Debug, Error)]
pub enum Error {
    /// Invalid or inconsistent configuration (missing disorder realization,
    /// bad protocol fields, unknown keys).
    #[error("configuration error: {0}")]
    Config(String),

    /// Argument outside the domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// State became non-finite. Carries the last time at which the state was valid.
    #[error("integration diverged after t = {last_valid_time}")]
    Diverged { last_valid_time: f64 },

    /// Norm or trace drifted beyond tolerance; the step size is too coarse.
    #[error("step-size error: {quantity} drift {drift:.3e} exceeds {limit:.1e} at t = {time}")]
    StepSize {
        quantity: &'static str,
        drift: f64,
        limit: f64,
        time: f64,
    },

    /// Population of the highest Fock state exceeded tolerance.
    #[error(
        "Fock truncation error: top-level population {population:.3e} at t = {time} \
         (n_max = {n_max}; retry with n_max >= {suggested_n_max})"
    )]
    Truncation {
        population: f64,
        time: f64,
        n_max: usize,
        suggested_n_max: usize,
    },

    /// Failure inside one trajectory of an ensemble.
    #[error("trajectory {index}: {source}")]
    Trajectory {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Process exit code associated with this error class.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Json(_) => 2,
            Error::Truncation { .. } => 4,
            Error::Trajectory { source, .. } => source.exit_code(),
            _ => 3,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
