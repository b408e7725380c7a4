//! Exact combinatorics of model functions on dual complexes.
//!
//! The crate works entirely over arbitrary-precision rationals. Its layers are
//! the dual complex and its subdivisions, piecewise-affine functions on them,
//! monomial valuations and ideals, numerical intersection data, envelopes
//! computed by exact linear programming, and an independent solver for curve
//! models used to cross-check the envelopes.

pub mod complex;
pub mod envelope;
pub mod io;
pub mod error;
pub mod linalg;
pub mod lp;
pub mod numerical;
pub mod oracle;
pub mod pa;
pub mod polytope;
pub mod rational;
pub mod subdivision;
pub mod support;
pub mod valuation;

pub use error::{Error, Result};
pub use rational::Rational;
