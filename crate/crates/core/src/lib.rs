//! Two-body laboratory for spurious perihelion shifts.
//!
//! The crate integrates the planar Kepler problem with the fixed-step
//! schemes used in particle codes, with an adaptive high-order integrator,
//! and with forces interpolated from a 2D lattice, then measures how far the
//! perihelion drifts per revolution and compares that with the general
//! relativistic advance `3π r_sch / (a (1 - e²))`.

pub mod config;
pub mod dynamics;
pub mod error;
pub mod fits;
pub mod harness;
pub mod integrators;
pub mod mesh;
pub mod metrology;
pub mod rootfind;
pub mod simulate;
pub mod vec2;

pub use dynamics::{
    diagnostics, initial_conditions, newtonian_acceleration, relativistic_acceleration,
    relativistic_advance_prediction, units, AccelerationField, Diagnostics, EccentricityScaling, ExactForce,
    OrbitSpec, OrbitState, ReferenceOrbit,
};
pub use config::RunConfig;
pub use error::{Error, Result};
pub use mesh::{locate, LinearVariant, Mesh, MeshScheme, MeshSpec};
pub use vec2::Vec2;
