//! L1 adaptive control for uncertain switched linear systems.
//!
//! The crate covers the plant and controller models, the reference and ideal
//! systems, the Lyapunov and dwell-time certificates with the transient
//! bounds they imply, a fixed-step co-simulation engine, and a
//! learn-to-fly pipeline that drives mode switches from an online model.

pub mod certificate;
pub mod config;
pub mod controller;
pub mod error;
pub mod l2f;
pub mod linalg;
pub mod model;
pub mod reference;
pub mod sim;
pub mod trajectory;

pub use error::{Error, Result};
