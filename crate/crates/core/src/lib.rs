//! Weighted variation norms for the shallow ReLU dictionary, discrete atom
//! grids on the ball and the square, constructive n-term approximation, and
//! training with a bias-penalizing regularizer.

pub mod cli;
pub mod error;
pub mod general;
pub mod geometry;
pub mod grids;
pub mod la;
pub mod mc;
pub mod pipeline;
pub mod planar;
pub mod quadrature;
pub mod report;
pub mod sampling;
pub mod training;

pub use error::{Error, Result};
pub use geometry::{Atom, AtomCombination, Domain, QuadratureSpec, WeightFn};
