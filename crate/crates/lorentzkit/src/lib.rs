//! Lorentzian metric toolkit: curvature, perfect-fluid structure, and
//! k-almost Yamabe soliton diagnostics for metrics given by coordinate
//! expressions.
//!
//! The crate is organized around a small expression language ([`expr`]),
//! coordinate charts with exact symbolic metric derivatives ([`geometry`]),
//! differential operators on scalar and vector fields ([`operators`]),
//! perfect-fluid decomposition and era classification ([`fluid`]),
//! soliton residuals and theorem diagnostics ([`soliton`]), and a linear
//! least-squares collocation solver for gradient-soliton potentials
//! ([`solver`]). The `lorentzkit` binary exposes all of it behind a metric
//! file format and a built-in chart catalog.

pub mod expr;
pub mod geometry;
pub mod operators;
pub mod tensor;

#[cfg(test)]
pub(crate) mod testutil;

pub use expr::{Expr, ParseError};
pub use geometry::{Chart, GeometryError};
pub use operators::{OperatorError, ScalarField, VectorField};
pub use tensor::{TensorValue, Variance};

/// Default numeric tolerance for boolean checks, two orders above the
/// accumulated double-precision error of second-derivative pipelines in
/// dimension four. Overridable per call and via `LORENTZKIT_TOL` in the CLI.
pub const DEFAULT_TOL: f64 = 1e-8;
