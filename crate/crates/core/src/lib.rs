//! Rotating, stratified, compressible flow in a slab: hydrostatic states,
//! Ekman layers, the damped quasi-geostrophic limit, a two-scale approximate
//! solution and relative-entropy diagnostics for a staggered 3D solver.

pub mod ansatz;
pub mod config;
pub mod ekman;
pub mod entropy_diag;
pub mod error;
pub mod hydrostatic;
pub mod io;
pub mod ns3d;
pub mod pressure;
pub mod qg;
pub mod spectral_ops;

pub use error::{Error, Result};
