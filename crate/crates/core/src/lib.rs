//! Branched-manifold presentations of symbolic matchbox manifolds.
//!
//! The transversal of a substitution suspension or a ℤ^d odometer is modelled
//! exactly by cylinder sets; holonomy, Delone nets, coding partitions, towers and
//! their quotient graphs are all computed without floating point.

pub mod clopen;
pub mod coding;
pub mod delone;
pub mod error;
pub mod holonomy;
pub mod invlim;
pub mod report;
pub mod systems;
pub mod tower;
pub mod voronoi;

pub use error::{Error, Result};

/// Exact rational used for leafwise lengths.
pub type Q = num_rational::Ratio<i64>;

/// Translation exponent. One-dimensional systems use the first entry only.
pub type Shift = [i64; 2];
