//! Simulation and Monte Carlo verification of functional central limit
//! results for two-timescale stochastic approximation with martingale
//! and controlled Markov noise.

pub mod cli;
pub mod config;
pub mod engine;
pub mod error;
pub mod fluct;
pub mod limit;
pub mod linalg;
pub mod markov;
pub mod model;
pub mod ode;
pub mod plot;
pub mod schedules;
pub mod stats;
pub mod verify;

pub use error::{Error, Result};
