//! Simulation of an atomic clock servo with spin-squeezed probe states.

pub mod analysis;
pub mod clockloop;
pub mod error;
pub mod lonoise;
pub mod montecarlo;
pub mod registry;
pub mod rng;
pub mod spinstate;
pub mod theory;

pub use error::{Error, Result};
pub use registry::{Named, Registry};
