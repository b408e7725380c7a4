//! Exact rational scalars.
//!
//! Every quantity in the crate is an arbitrary-precision rational kept in
//! lowest terms with a positive denominator. The textual form is `p/q`, or
//! just `p` when the denominator is one.

use std::fmt;

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

pub type Rational = BigRational;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("cannot parse `{input}` as a rational number")]
pub struct ParseRationalError {
    pub input: String,
}

/// Parses `p`, `p/q`, `-p/q` (whitespace tolerated around the parts).
pub fn parse_rational(input: &str) -> Result<Rational, ParseRationalError> {
    let err = || ParseRationalError { input: input.to_string() };
    let trimmed = input.trim();
    let (num, den) = match trimmed.split_once('/') {
        Some((n, d)) => (n.trim(), d.trim()),
        None => (trimmed, "1"),
    };
    let num: BigInt = num.parse().map_err(|_| err())?;
    let den: BigInt = den.parse().map_err(|_| err())?;
    if den.is_zero() {
        return Err(err());
    }
    Ok(Rational::new(num, den))
}

pub fn format_rational(q: &Rational) -> String {
    q.to_string()
}

pub fn rat(n: i64, d: i64) -> Rational {
    Rational::new(BigInt::from(n), BigInt::from(d))
}

pub fn int(n: i64) -> Rational {
    Rational::from_integer(BigInt::from(n))
}

pub fn from_bigint(n: &BigInt) -> Rational {
    Rational::from_integer(n.clone())
}

/// Least common multiple of the denominators; one for an empty input.
pub fn lcm_denominators<'a>(values: impl IntoIterator<Item = &'a Rational>) -> BigInt {
    values
        .into_iter()
        .fold(BigInt::one(), |acc, q| acc.lcm(q.denom()))
}

pub fn max_abs<'a>(values: impl IntoIterator<Item = &'a Rational>) -> Rational {
    values
        .into_iter()
        .map(|q| q.abs())
        .max()
        .unwrap_or_else(Rational::zero)
}

/// Non-authoritative decimal approximation, for human-facing tables only.
pub fn approx(q: &Rational) -> f64 {
    q.to_f64().unwrap_or(f64::NAN)
}

/// Wrapper that displays a rational in canonical form.
pub struct Display<'a>(pub &'a Rational);

impl fmt::Display for Display<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

pub fn format_vector(values: &[Rational]) -> String {
    values
        .iter()
        .map(format_rational)
        .collect::<Vec<_>>()
        .join(",")
}
