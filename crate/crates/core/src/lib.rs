//! Allocation-only numerical core for estimating the visual search
//! difficulty of images.
//!
//! Everything here is pure: response-log cleaning, rank statistics, pixel
//! baselines, the feature-matrix contract, kernel regression and linear SVM
//! solvers, and the two application loops (multiple-instance learning with an
//! easy-to-hard curriculum, and self-training). File formats, the command line
//! and threading live in the `vsd` companion crate.

#![no_std]
// `!(x > 0.0)` is used on purpose so NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod anno;
pub mod diag;
pub mod error;
pub mod features;
pub mod imaging;
pub mod linalg;
pub mod metrics;
pub mod mil;
pub mod regression;
pub mod selftrain;
pub mod splits;

pub use diag::Diagnostic;
pub use error::{Error, Result};
