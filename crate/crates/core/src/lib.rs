//! Learned perceptive forward dynamics and sampling-based planning on
//! simulated 2.5D terrain.

pub mod config;
pub mod error;
pub mod eval;
pub mod fileio;
pub mod geom;
pub mod model;
pub mod mppi;
pub mod nn;
pub mod par;
pub mod plot;
pub mod replay;
pub mod rng;
pub mod run;
pub mod sampling;
pub mod terrain;

pub use error::{FdmError, Result};
