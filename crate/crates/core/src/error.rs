use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("integer overflow computing {0}")]
    Overflow(&'static str),
    #[error("enumeration cap exceeded: {needed} > {cap}")]
    CapExceeded { needed: u128, cap: u128 },
    #[error("level-0 array has no contraction")]
    LevelZero,
    #[error("iteration did not converge: {0}")]
    NoConvergence(String),
    #[error("target variance {0} is not positive")]
    NonPositiveTarget(f64),
    #[error("no bracket found for target variance {0}")]
    NoBracket(f64),
    #[error("empty sample")]
    Empty,
    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;
