//! Radial sign-changing solutions of the Kirchhoff equation
//! `-(1 + b∫|∇u|²)Δu + V(|x|)u = |u|^{p-2}u`, `2 < p < 4`, on a ball in ℝ³.
//!
//! The solution with `k` sign changes is built annulus by annulus: for fixed
//! nodal radii each component is minimized on the constrained Nehari set
//! ([`inner`]), the radii are then optimized ([`outer`]) and the components
//! are glued into one radial function.

// `!(x > 0.0)` style checks are kept on purpose: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod archive;
pub mod config;
pub mod discretization;
pub mod error;
pub mod experiments;
pub mod functional;
pub mod inner;
pub mod nehari;
pub mod oracles;
pub mod outer;
pub mod rng;

pub use error::{Error, Result};
