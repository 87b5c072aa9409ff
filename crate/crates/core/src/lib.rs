//! Dual-stream trend/deviation forecasting models (CaReTS1-4), designed
//! baselines, an uncertainty-weighted multi-task loss and a cross-validation
//! harness for multi-step time-series forecasting.

pub mod baselines;
pub mod cli;
pub mod data;
pub mod encoders;
pub mod error;
pub mod gradcheck;
pub mod heads;
pub mod kv;
pub mod loss;
pub mod model;
pub mod nn;
pub mod synthetic;
pub mod tape;
pub mod train;

pub use error::{CaretsError, Result};
