//! Attitude estimation and control on SO(3) with linear complementary filters.

mod error;

pub mod controller;
pub mod filters;
pub mod log;
pub mod lyapunov;
pub mod poly;
pub mod scenario;
pub mod sim;
pub mod so3;
pub mod triad;

pub use error::{Error, Result};
