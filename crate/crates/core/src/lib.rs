//! Numerical study of eigenvalue stability for elliptic systems on dumbbell domains
//! whose connecting tube shrinks to zero width.

pub mod coefficients;
pub mod eigensolve;
pub mod error;
pub mod fem;
pub mod geometry;
pub mod inequalities;
pub mod sparse;
pub mod study;

pub use error::{Error, Result};
