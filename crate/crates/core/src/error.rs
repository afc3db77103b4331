use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid size: {0}")]
    InvalidSize(String),

    #[error("invalid edge ({0}, {1}) for {2} qubits")]
    InvalidEdge(usize, usize, usize),

    #[error("unsupported hamiltonian: {0}")]
    UnsupportedHamiltonian(String),

    #[error("unsupported gradient: {0}")]
    UnsupportedGradient(String),

    #[error("arity mismatch: expected {expected} parameters, got {got}")]
    Arity { expected: usize, got: usize },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("matrix is not symmetric (max asymmetry {0:e})")]
    NotSymmetric(f64),

    #[error("linear solve failed: {0}")]
    SolveFailed(String),

    #[error("ill-conditioned calibration: {0}")]
    IllConditionedCalibration(String),

    #[error("step {step} failed: {source}")]
    Step {
        step: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("parse error on line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

impl Error {
    pub(crate) fn at_step(self, step: usize) -> Self {
        Error::Step {
            step,
            source: Box::new(self),
        }
    }
}
