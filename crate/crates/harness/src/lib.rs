//! Command-line harness around `lincf-core`: configuration, IMU log replay,
//! Monte-Carlo sweeps and run metrics.

pub mod commands;
pub mod config;
pub mod error;
pub mod imu;
pub mod metrics;
pub mod sweep;

pub use config::Config;
pub use error::{HarnessError, Result};
