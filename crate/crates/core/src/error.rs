use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("parity error: {0}")]
    Parity(String),
    #[error("operator is not Hermitian (defect {defect:.3e})")]
    NotHermitian { defect: f64 },
    #[error("operator does not conserve particle number: {0}")]
    NumberConservation(String),
    #[error("spectral gap {gap:.6e} is below the weight-function gap {required:.6e}")]
    GapTooSmall { gap: f64, required: f64 },
    #[error("weight function not certified: leakage {leakage:.3e} above {bound:.1e}; {suggestion}")]
    Uncertified {
        leakage: f64,
        bound: f64,
        suggestion: String,
    },
    #[error("integration did not converge: {0}")]
    Convergence(String),
}

impl Error {
    pub fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
