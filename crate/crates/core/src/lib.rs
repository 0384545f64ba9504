//! Operator learning for singularly perturbed convection-diffusion problems.
//!
//! The crate builds layer-adapted meshes, samples periodic Gaussian random
//! forcings, produces reference solutions with upwind finite differences and
//! trains DeepONet surrogates on the resulting data.

pub mod error;
pub mod experiment;
pub mod deeponet;
pub mod fdsolve;
pub mod grf;
pub mod linalg;
pub mod mesh;
pub mod nn;
pub mod pipeline;
pub mod rng;
pub mod spectral;

pub use error::{Error, Result};
