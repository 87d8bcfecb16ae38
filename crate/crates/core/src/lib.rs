//! Simulation of a distributed-antenna wireless power transfer system:
//! ceiling array channel, single- and multi-tone excitation, RF-to-DC
//! harvesting, a buffered end device, and trace replay for response-time
//! statistics.

// `!(x > 0.0)` is used on purpose so NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod array_channel;
pub mod campaign;
pub mod end_device;
pub mod error;
pub mod excitation;
pub mod harvester;
pub mod quantities;
pub mod trace_replay;

pub use error::{Error, Result};
pub use excitation::Strategy;
pub use end_device::McuMode;
