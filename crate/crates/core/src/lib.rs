//! Simulation of online team matching with binary worker types.
//!
//! Workers are high (1) or low (0). A pair scores the minimum of its types
//! under weakest-link feedback and the maximum under strongest-link
//! feedback. Policies learn types from pair scores while trying to keep the
//! cumulative shortfall against the omniscient matching small.

pub mod cli;
pub mod error;
pub mod experiments;
pub mod knowledge;
pub mod model;
pub mod oracle;
pub mod policy;
pub mod regret;
pub mod rng;
pub mod schedule;
pub mod sim;
pub mod verify;

pub use error::{Error, Result};
