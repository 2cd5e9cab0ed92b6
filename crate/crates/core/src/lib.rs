//! Gradient-flow quantum optimal control for closed N-level systems, with a
//! seeded harness for sweeping control constraints.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dynamics;
pub mod error;
pub mod field;
pub mod harness;
pub mod numerics;
pub mod objective;
pub mod optimizer;
pub mod presets;
pub mod rng;
pub mod system;

pub use error::{Error, Result};
