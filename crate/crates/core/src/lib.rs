//! Finsler holonomy: jets, Finsler models, sprays and curvature, vertical
//! vector fields on the indicatrix bundle, the Lie algebras they generate and
//! numerical parallel translation.

// Index loops mirror tensor notation; negated comparisons also reject NaN.
#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

pub mod algebra;
pub mod expr;
pub mod fields;
pub mod geometry;
pub mod jets;
pub mod linalg;
pub mod models;
pub mod ode;
pub mod riemann;
pub mod scalar;
pub mod transport;

pub type Jet64 = jets::Jet<f64>;
pub type Jet32 = jets::Jet<f32>;
pub type LeviCivita64 = riemann::LeviCivita<f64>;
