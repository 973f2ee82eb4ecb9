//! Convex-integration engine for the two-dimensional Monge-Ampere equation
//! `det D^2 v = f`: corrugation steps, stages and schemes over closed-form
//! fields, with sampled verification tools.
//!
//! Everything is generic over the scalar type; the aliases below fix `f64`.

pub mod analysis;
pub mod decomp;
pub mod error;
pub mod field;
pub mod oscillate;
pub mod parallel;
pub mod quadrature;
mod scalar;
pub mod scheme;
pub mod stage;
pub mod sym2;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Field = field::FieldExpr<f64>;
pub type Sym = field::SymField<f64>;
pub type Domain = field::Domain<f64>;
pub type Rect = field::Rect<f64>;
