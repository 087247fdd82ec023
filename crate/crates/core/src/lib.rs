//! Resilience analysis and delayed tracking control for a chaser spacecraft
//! that has lost control authority over one thruster.

// `!(x > 0.0)` is used deliberately so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod controller;
pub mod disturbance;
pub mod dynamics;
pub mod error;
pub mod geometry;
pub mod reference;
pub mod resilience;
pub mod sim;

pub use error::{Error, Result};
