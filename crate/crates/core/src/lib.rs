//! Recovery of consistent pairwise fundamental and essential matrices from
//! the low-rank structure of their multiview stack.
//!
//! The 3n x 3n matrix holding every pairwise fundamental `F_ij` of n cameras
//! is symmetric with rank at most 6 (exactly 6 unless all centers are
//! collinear) and splits as `A + A^T` with `rank(A) = 3`. [`solver::solve`]
//! uses that structure to recover per-pair scales, fill in missing pairs,
//! and reject outlier estimates. [`location`] turns the result into camera
//! directions and locations.

pub mod error;
pub mod experiment;
pub mod geometry;
pub mod io;
pub mod linalg;
pub mod location;
pub mod multiview;
pub mod solver;
pub mod synth;

pub use error::{Error, Result};
