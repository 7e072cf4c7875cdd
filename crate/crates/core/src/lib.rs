//! Slot-level simulator of a teleoperated-driving uplink in which learning
//! agents choose LiDAR compression and uplink scheduling priorities, plus a
//! meta agent that switches between centralized and federated learning.

pub mod agent_ca;
pub mod agent_sa;
pub mod app;
pub mod channel;
pub mod config;
pub mod error;
pub mod meta;
pub mod netsim;
pub mod nn;
pub mod runner;
pub mod seeds;

pub use config::SimConfig;
pub use error::{Error, Result};
