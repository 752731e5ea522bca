use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("mass matrix is singular or ill-conditioned (condition number {condition:.3e})")]
    SingularMass { condition: f64 },

    #[error("m_uu^-1 m_au^T is not integrable (curl residual {residual:.3e})")]
    NonIntegrable { residual: f64 },

    #[error("SDC factorization is singular at the requested state: {0}")]
    Factorization(String),

    #[error("no stabilizing CARE solution: {reason}")]
    NoStabilizingSolution { reason: String },

    #[error("CARE solution lost symmetry (relative asymmetry {asymmetry:.3e})")]
    IllConditioned { asymmetry: f64 },

    #[error("swarm is empty")]
    EmptySwarm,

    #[error("state blow-up at t = {t:.3} s (|q| = {magnitude:.3e})")]
    StateBlowup { t: f64, magnitude: f64 },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("incompatible trace: {0}")]
    IncompatibleTrace(String),

    #[error("i/o: {0}")]
    Io(String),

    #[error("could not parse {what}: {message}")]
    Parse { what: String, message: String },
}
