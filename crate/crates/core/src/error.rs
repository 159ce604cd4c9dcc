use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("not symmetric positive definite: {0}")]
    NotSpd(String),
    #[error("no stabilizing solution: {0}")]
    NoStabilizingSolution(String),
    #[error("rank deficient: {0}")]
    RankDeficient(String),
    #[error("degenerate sampling: {0}")]
    DegenerateSampling(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("infeasible: {0}")]
    Infeasible(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("envelope violation at t={t:.4} s: {reason}")]
    Envelope { t: f64, reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn dim_err(msg: impl Into<String>) -> Error {
    Error::Dimension(msg.into())
}
