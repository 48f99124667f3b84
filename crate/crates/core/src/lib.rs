//! Memristive nanowire network reservoir.
//!
//! Raw PCM audio is length-standardized into a voltage drive, pushed through a
//! self-assembled nanowire network whose junctions follow a memory-state
//! equation, and read out as a source-to-ground conductance time series. The
//! [`classify`] and [`harness`] modules turn those series into features for
//! linear classifiers and run the experiment suite.

pub mod audio;
pub mod classify;
pub mod dynamics;
pub mod error;
pub mod harness;
pub mod network;
pub mod reservoir;
pub mod solver;
pub mod synth;

mod util;

pub use error::{Error, Result};
