//! Behavioral simulation of RRAM crossbar baseband processing for
//! MIMO-OFDM links: device programming, analog DFT and detection circuits,
//! and end-to-end link experiments.

pub mod channel;
pub mod cli;
pub mod config;
pub mod crossbar;
pub mod device;
pub mod error;
pub mod latency_theory;
pub mod linmap;
pub mod mimo;
pub mod modem;
pub mod ofdm;
pub mod pipeline;
pub mod rng;
pub mod stats;

pub use error::{Error, Result};
