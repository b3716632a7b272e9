//! Blending an untrusted black-box controller with model-based LQR advice,
//! with the confidence in the black box learned online.

pub mod adaptive;
pub mod adversarial;
pub mod config;
pub mod envs;
pub mod error;
pub mod experiments;
pub mod guarantees;
pub mod linalg;
pub mod plant;
pub mod policy;

pub use error::{Error, Result};
