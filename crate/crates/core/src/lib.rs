//! Simulation and verification tools for the parabolic complex Monge-Ampère
//! flow on flat tori with Hermitian background metrics.

pub mod cli;
pub mod config;
pub mod dump;
pub mod elliptic;
pub mod error;
pub mod flow;
pub mod frame;
pub mod grid;
pub mod herm;
pub mod metric;
pub mod monitors;
pub mod normal_frame;
pub mod run;
pub mod spectral;
pub mod trig;
pub mod verify;

pub use error::{Error, Result};
