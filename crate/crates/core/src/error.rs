use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid graph: {0}")]
    InvalidGraph(String),

    #[error("vertex {vertex} has no neighbours (m_i >= 1 violated)")]
    IsolatedVertex { vertex: usize },

    #[error("{what} index {index} out of range (expected < {bound})")]
    IndexOutOfRange {
        what: &'static str,
        index: usize,
        bound: usize,
    },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("agent {agent} is not stable: eigenvalue real part {real_part:e}")]
    UnstableAgent { agent: usize, real_part: f64 },

    #[error("ill-conditioned {context}: smallest singular value {sigma_min:e}")]
    IllConditioned { context: String, sigma_min: f64 },

    #[error("ill-posed static loop: {0}")]
    IllPosedLoop(String),

    #[error("{what} is not Hermitian (asymmetry {asymmetry:e})")]
    NonHermitian { what: String, asymmetry: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("simulation produced a non-finite state at step {step}")]
    NonFiniteState { step: usize },

    #[error("zero input energy; gain estimate undefined")]
    ZeroInput,

    #[error(transparent)]
    Spec(#[from] crate::spec::SpecError),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
