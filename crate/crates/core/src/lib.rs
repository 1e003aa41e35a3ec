//! Scalar-diffraction simulation and misalignment-aware training of
//! multi-layer diffractive networks.

pub mod data;
pub mod error;
pub mod evaluation;
pub mod heads;
pub mod network;
pub mod optics;
pub mod rng;
mod spectral;
pub mod training;

pub use error::{Error, Result};
