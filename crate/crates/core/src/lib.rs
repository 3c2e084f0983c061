//! Trajectory planning for control-affine systems, and legged robots in
//! particular, by an affine geometric heat flow.
//!
//! A curve joining the boundary states is deformed by a parabolic flow that
//! decreases a penalized action. The action punishes motion along directions
//! the controls cannot produce and violation of contact and kinematic
//! constraints. Controls are then read off the converged curve and
//! integrated to recover a dynamically feasible motion.

// `!(x > 0.0)` is used on purpose so NaN is rejected too
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod constraints;
pub mod error;
pub mod extraction;
pub mod io;
pub mod metric;
pub mod model;
pub mod pipeline;
pub mod registry;
pub mod schedule;
pub mod solver;

pub use error::{Error, Result};

/// Library version, recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
