use crate::rational::Rational;

/// Errors raised by the library.
///
/// The variants separate bad input (`Structural`, `Data`, `Type`,
/// `Degenerate`, `Precondition`, `Truncation`) from mathematical outcomes
/// that are not errors of the caller (`Infeasible`, `Unbounded`) and from
/// results that could not be certified (`Certificate`, `Inconclusive`).
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("structural error: {0}")]
    Structural(String),
    #[error("degenerate input: {0}")]
    Degenerate(String),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("type error: {0}")]
    Type(String),
    #[error("valuation not certified: value {value} is not below the truncation order {order}")]
    Truncation { value: Box<Rational>, order: Box<Rational> },
    #[error("certificate failure at {point}: {detail}")]
    Certificate { point: String, detail: String },
    #[error("infeasible: {0}")]
    Infeasible(String),
    #[error("unbounded: {0}")]
    Unbounded(String),
    #[error("inconclusive: {0}")]
    Inconclusive(String),
}

pub type Result<T> = std::result::Result<T, Error>;
