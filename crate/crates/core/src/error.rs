use thiserror::Error;

/// Errors raised by the library. Numerical inconclusiveness is not an error:
/// it is reported through flags on the result types.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("elements live over different noncommutativity matrices")]
    ContextMismatch,

    #[error("direction index {index} out of range for lattice rank {rank}")]
    IndexOutOfRange { index: usize, rank: usize },

    #[error("gauge parameter t[{index}] has modulus {modulus}, expected 1")]
    NotUnimodular { index: usize, modulus: f64 },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("ill-conditioned input: {0}")]
    Conditioning(String),

    #[error("degenerate lattice: {0}")]
    DegenerateLattice(String),

    #[error("degenerate form: {0}")]
    DegenerateForm(String),

    #[error("connection is not flat (largest curvature coefficient {max_coeff:.3e})")]
    NonFlat { max_coeff: f64 },

    #[error("hypothesis violated: {0}")]
    Hypothesis(String),

    #[error("integer overflow in {0}")]
    Overflow(&'static str),

    #[error("numerical routine failed: {0}")]
    Numerical(String),
}

pub type Result<T> = std::result::Result<T, Error>;
