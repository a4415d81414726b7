//! Scheduling and techno-economics for solar-thermal direct air capture.

// Negated comparisons are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod dac;
pub mod design;
pub mod economics;
pub mod error;
pub mod exact;
pub mod exec;
pub mod global;
pub mod golden;
pub mod plant;
pub mod solar;
pub mod synthetic;
pub mod thermo;
pub mod threshold;
pub mod timeseries;

pub use error::{Error, Result};
pub use exec::Execution;
