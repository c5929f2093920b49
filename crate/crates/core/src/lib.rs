//! Kernel ridge-regression classification of planar landmark shapes.

pub mod classifiers;
#[cfg(feature = "cli")]
pub mod cli;
pub mod data;
pub mod error;
pub mod evaluation;
pub mod kernels;
pub mod sampling;
pub mod shape;

pub use error::{Result, ShapeError};
