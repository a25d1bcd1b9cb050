use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum WakeError {
    #[error("non-finite input: {0}")]
    NonFinite(&'static str),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("no candidate wake vector: {0}")]
    NoCandidate(String),

    #[error("quadrature did not converge: estimated error {estimate:.3e} exceeds tolerance {tolerance:.3e}")]
    Quadrature { estimate: f64, tolerance: f64 },

    #[error("time-tail error {relative:.3e} above tolerance {tolerance:.3e}; increase the near-time cut to about {required_t_cut:.3} periods")]
    TailError {
        relative: f64,
        tolerance: f64,
        required_t_cut: f64,
    },

    #[error("inadmissible rigid motion: {0}")]
    Inadmissible(String),
}

pub type Result<T> = std::result::Result<T, WakeError>;
