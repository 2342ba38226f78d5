//! Peakon dynamics on Diff(ℝ)-strands.
//!
//! The crate generates exact singular (peakon) solutions of the strand
//! parameter equations, integrates those equations numerically in `(t, s)`,
//! reconstructs the velocity fields and checks every reduction by residual
//! and conservation diagnostics.

// `!(x > 0.0)` also rejects NaN. Index loops mirror the peakon sums.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod analytic;
pub mod background;
pub mod ch;
pub mod complex;
pub mod config;
pub mod error;
pub mod fields;
pub mod kernel;
pub mod output;
pub mod par;
pub mod run;
pub mod solver;

pub use error::{Error, Result};
