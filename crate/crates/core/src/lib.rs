//! Numerical laboratory for functions satisfying the Polyak-Łojasiewicz
//! inequality `‖∇f(x)‖² ≥ C·(f(x) − inf f)`.
//!
//! - [`field`]: scalar fields with derivative oracles and metadata, regions.
//! - [`expr`]: a small expression language compiled to fields.
//! - [`catalogue`]: named fields with known constants and minimizing sets.
//! - [`flow`]: adaptive gradient-flow integration and trajectory bounds.
//! - [`certify`]: sampled PŁ constants, quadratic growth, normalization.
//! - [`minset`]: the minimizing set, its Hessian spectra and charts.
//! - [`distance`]: metric projections and the squared-distance field.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod catalogue;
pub mod certify;
pub mod distance;
pub mod error;
pub mod expr;
pub mod field;
pub mod flow;
pub mod linalg;
pub mod minset;
pub mod sampling;

pub use error::{Error, Result};
pub use field::{point, BoxBounds, Point, Region, ScalarField, Smoothness};
pub use flow::{flow_limit, integrate_flow, FlowConfig, Trajectory};
