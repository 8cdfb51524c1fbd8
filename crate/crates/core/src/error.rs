use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("non-finite score for component {component} ({term})")]
    NonFiniteScore { component: usize, term: &'static str },

    #[error("invalid restricted problem: {0}")]
    InvalidProblem(String),

    #[error("infeasible assignment: {0}")]
    Infeasible(String),

    #[error("bookkeeping corruption: {0}")]
    Corrupted(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("ELBO decreased from {before} to {after}")]
    ElboDecrease { before: f64, after: f64 },

    #[error("invalid model state: {0}")]
    InvalidState(String),
}
