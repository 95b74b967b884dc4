//! symmlab: numerical verification of symmetry deficits for p-Laplace
//! Dirichlet problems `-div(|grad u|^{p-2} grad u) = f(u)` on nearly-ball
//! planar domains.
//!
//! The crate solves the PDE by p-Dirichlet energy minimization on
//! structured polar meshes, computes distribution functions and Schwarz
//! symmetrizations with exact per-triangle level-set geometry, evaluates
//! the symmetrized radial comparison solution in the volume coordinate,
//! and assembles a report of deficit quantities and inequality verdicts:
//! the Pohozaev-type deficit and its nonnegativity, its bound by the
//! isoperimetric deficit, the radial comparison (pointwise and in sup
//! norm), energy gap bounds, and the stability trend of the L1 asymmetry.
//!
//! Numeric kernels are generic over the scalar type via [`scalar::Real`];
//! `f64` is the default and the type the pipeline, file formats and CLI
//! use.

pub mod config;
pub mod deficits;
pub mod error;
pub mod geometry;
pub mod io;
pub mod nonlinearity;
pub mod pipeline;
pub mod quad;
pub mod radial;
pub mod rearrange;
pub mod scalar;
pub mod solver;

pub use error::{Error, Result};
pub use scalar::{isoperimetric_constant, unit_ball_volume, Real};

/// Concrete aliases for the default `f64` instantiation.
pub type Domain64 = geometry::Domain<f64>;
pub type Mesh64 = geometry::Mesh<f64>;
pub type MeshFunction64 = solver::MeshFunction<f64>;
pub type Nonlinearity64 = nonlinearity::Nonlinearity<f64>;
pub type RadialProfile64 = rearrange::RadialProfile<f64>;
