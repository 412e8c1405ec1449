//! Reduced-order surrogates for nonlinear diffusion in channelized porous
//! media: a Q1 finite-element solver, channelized permeability generation,
//! POD with a nodal (interpolatory) basis and Galerkin reduced model, a
//! from-scratch MLP trained with AdaMax, data generation for simulation and
//! observation trajectories, and an experiment harness.

pub mod data;
pub mod error;
pub mod experiment;
pub mod fem;
pub mod io;
pub mod linalg;
pub mod mesh;
pub mod net;
pub mod perm;
pub mod pod;

pub use error::{Error, Result};
