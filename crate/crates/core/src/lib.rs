//! Anisotropic Littlewood-Paley theory on periodic grids.
//!
//! Dilation groups `t^P` and their quasi-norms, spectral Riesz potentials,
//! averaging kernels, square functions of several kinds, power weights and
//! weighted Sobolev norm comparisons.

pub mod dilation;
pub mod error;
pub mod fields;
pub mod kernels;
pub mod operators;
pub mod sobolev;
pub mod squares;
pub mod weights;

pub use dilation::{DilationGroup, QuasiNormResult};
pub use error::{Error, Result};
