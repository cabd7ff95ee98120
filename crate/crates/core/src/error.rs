use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Mismatch(String),

    #[error("reality violated: {0}")]
    Reality(String),

    #[error("term exceeds weighted degree cap: {0}")]
    CapExceeded(String),

    #[error("series has a nonzero constant term: {0}")]
    ConstantTerm(String),

    #[error("low-order terms obstruct the operation: {0}")]
    LowOrder(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("isometry identity fails: {0}")]
    Isometry(String),

    #[error("sigma = -1 requires ell = n/2 (n = {n}, ell = {ell})")]
    SigmaSignature { n: usize, ell: usize },

    #[error("parameter recovery residual is nonzero: {0}")]
    Recovery(String),

    #[error("map is not CR transversal: {0}")]
    Transversality(String),

    #[error("normalization violated: {0}")]
    Normalization(String),

    #[error("hypothesis identity fails at weighted degree {degree}")]
    Hypothesis { degree: u32 },

    #[error("matrix is singular: {0}")]
    Singular(String),

    #[error("value leaves the Gaussian rationals: {0}")]
    Irrational(String),

    #[error("identity check failed at weighted degree {degree}: {what}")]
    IdentityFailed { degree: u32, what: String },

    #[error("internal consistency failure: {0}")]
    Internal(String),
}

pub type Result<T> = std::result::Result<T, Error>;
