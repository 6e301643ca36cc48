use thiserror::Error;

/// Errors produced by the solver, the oracles and the training loop.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    Input(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("oracle precondition failed: {0}")]
    Precondition(String),

    #[error("undamped resonance: eigenvalue of mode {mode:?} equals k0^2 = {k0_squared}")]
    Resonance { mode: Vec<usize>, k0_squared: f64 },

    #[error("Green's function is singular at zero distance")]
    Singular,

    #[error("non-finite loss at iteration {iteration} (term {term})")]
    NonFinite { iteration: usize, term: String },

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn input<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Input(msg.into()))
}
