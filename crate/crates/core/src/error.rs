use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum Error {
    #[error("modulus {0} is not a prime")]
    NotPrime(u32),
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("ambient mismatch: ({p1}, {n1}) vs ({p2}, {n2})")]
    AmbientMismatch { p1: u32, n1: usize, p2: u32, n2: usize },
    #[error("size guard exceeded: {what} needs {needed}, cap is {cap}")]
    SizeGuard { what: &'static str, needed: u128, cap: u128 },
    #[error("subgroup dimension {k} exceeds ambient dimension {n}")]
    DimensionTooLarge { k: usize, n: usize },
    #[error("{0} is not a power of p = {1}")]
    NotPowerOfP(usize, u32),
    #[error("table is not a permutation of Z_p^n")]
    NotAPermutation,
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("invalid circuit: {0}")]
    InvalidCircuit(String),
    #[error("layout/oracle mismatch: {0}")]
    OracleMismatch(String),
    #[error("serialization: {0}")]
    Serialization(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Serialization(e.to_string())
    }
}
