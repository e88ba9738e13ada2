use thiserror::Error;

/// Errors surfaced by the library.
#[derive(Debug, Error)]
pub enum Error {
    /// Malformed or out-of-domain input (bad config, trace row, profile).
    #[error("invalid input: {0}")]
    Input(String),

    /// Operation called in a state that does not allow it (missing models, double free).
    #[error("invalid state: {0}")]
    State(String),

    /// Not enough free GPUs in total.
    #[error("insufficient capacity: need {requested} GPUs, {free} free")]
    Capacity { requested: u32, free: u32 },

    /// Enough GPUs are free in total, but no aligned buddy blocks can hold the job.
    #[error("placement failed: {0}")]
    Placement(String),

    /// An internal invariant was observed broken.
    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn input(msg: impl Into<String>) -> Self {
        Error::Input(msg.into())
    }

    pub(crate) fn state(msg: impl Into<String>) -> Self {
        Error::State(msg.into())
    }

    /// True for errors caused by user-supplied data rather than a program bug.
    pub fn is_input_error(&self) -> bool {
        !matches!(self, Error::Invariant(_))
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
