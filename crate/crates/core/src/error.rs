use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("matrix is not unitary (defect {defect:.3e}) at step {step}")]
    NotUnitary { step: usize, defect: f64 },
    #[error("malformed algorithm: {0}")]
    Malformed(String),
    #[error("error probability {error:.4} exceeds the limit on input {input}")]
    ErrorTooLarge { input: String, error: f64 },
    #[error("algorithm is not clean: {0}")]
    NotClean(String),
    #[error("no positive input exists: target is not in the column space of A")]
    NoPositiveInput,
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("input is not positive enough: squared final-state defect {0:.3e}")]
    NotPositive(f64),
    #[error("negative witness denominator vanishes ({0:.3e})")]
    Degenerate(f64),
    #[error("memory budget exceeded ({0}); use spectral mode")]
    Budget(String),
    #[error("eigensolver failure: {0}")]
    Eigen(String),
    #[error("children disagree: {0}")]
    Children(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("io error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;
