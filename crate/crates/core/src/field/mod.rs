//! Scalar and matrix fields on planar rectangles.

pub mod bump;
mod domain;
mod eval;
mod expr;
pub mod grid;
pub mod mollify;
pub mod norm;
pub mod poisson;

pub use domain::{Domain, Rect};
pub use eval::{Program, Scratch};
pub use expr::{differentiate, FieldExpr, SymField, VecField};
pub(crate) use expr::Kind;
pub use mollify::{mollify, Mollifier, DEFAULT_QUAD_ORDER};
pub use norm::{commutator_gap, extend, norm_estimate, Lattice, NormEstimate, NormKind, RegionField};
pub use poisson::{solve_dirichlet, SineSeries};
