use thiserror::Error;

/// Errors raised by the simulator.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("atoms {p} and {q} are {distance} um apart, below the minimum separation {min}")]
    CoincidentAtoms {
        p: usize,
        q: usize,
        distance: f64,
        min: f64,
    },

    #[error("atom groups overlap at atom {0}")]
    OverlappingGroups(usize),

    #[error("basis dimension {dimension} exceeds the cap of {cap} amplitudes")]
    BasisTooLarge { dimension: u128, cap: usize },

    #[error("step size underflow at t = {time}")]
    StepUnderflow { time: f64 },

    #[error("step limit of {steps} reached at t = {time}")]
    StepLimit { time: f64, steps: usize },

    #[error("oracle supports at most {cap} atoms, got {n}")]
    OracleTooLarge { n: usize, cap: usize },

    #[error("{failed} of {total} realizations failed")]
    TooManyFailures { failed: usize, total: usize },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
