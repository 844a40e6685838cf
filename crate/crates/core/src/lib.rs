//! Angle-of-arrival estimation for small uniform linear arrays under
//! direction-dependent impairments.

pub mod beamformer;
pub mod coarray;
pub mod codec;
pub mod error;
pub mod estimators;
pub mod harness;
pub mod modl;
pub mod nn;
pub mod rng;
pub mod sim;

pub use error::{Error, Result};
