//! Simulated NMR spectroscopy on noisy gate-based quantum hardware.

// `!(x > 0.0)` is used on purpose so NaN fails validation
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod budget;
pub mod cli;
pub mod circuit;
pub mod error;
pub mod exact;
pub mod lindblad;
pub mod noisy;
pub mod operators;
pub mod record;
pub mod spectrum;
pub mod spin_system;

pub use error::{Error, Result};
