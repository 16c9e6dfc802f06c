//! Testing stochastic rationalizability of repeated cross-sectional demand data
//! under a random utility model.
//!
//! The pipeline runs in four stages:
//!
//! 1. [`geometry`] cuts each budget hyperplane into *patches*: the regions that lie
//!    on, strictly above or strictly below every other budget.
//! 2. [`enumerate`] lists every rationalizable choice type over patches, the columns
//!    of the rational demand matrix `A`. Rationalizability is checked by
//!    [`revpref`].
//! 3. [`estimate`] turns microdata into a vector `pi` of patch probabilities.
//! 4. [`conetest`] measures the weighted distance from `pi` to the cone spanned by
//!    `A` and calibrates it with a tightened, recentered bootstrap.
//!
//! [`counterfactual`] bounds demand on an unobserved budget, and [`simulate`]
//! generates synthetic populations for validation.

// `!(x > 0.0)` is deliberate: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod conetest;
pub mod counterfactual;
pub mod enumerate;
pub mod error;
pub mod estimate;
pub mod exec;
pub mod geometry;
pub mod linalg;
pub mod lp;
pub mod revpref;
pub mod rng;
pub mod simulate;

pub use error::{Error, Result};
pub use exec::Execution;

/// Version tag written into every JSON report.
pub const SCHEMA_VERSION: u32 = 1;
