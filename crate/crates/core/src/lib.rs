//! Split-step finite element solver for the hydrostatic Stokes and
//! Navier-Stokes equations on vertically structured tetrahedral meshes.

pub mod assembly;
pub mod error;
pub mod fe_spaces;
pub mod hydrostatic_stokes;
pub mod jet;
pub mod linalg;
pub mod mesh;
pub mod quadrature;
pub mod solvers;
pub mod stepper;
pub mod sparse;
pub mod verification;
pub mod vertical_velocity;

pub use error::{Error, Result};
