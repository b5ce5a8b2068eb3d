//! Isogeometric Kirchhoff–Love shell analysis and material-field identification
//! by finite element model updating.

pub mod assembly;
pub mod constitutive;
pub mod error;
pub mod experiments;
pub mod forward;
pub mod inverse;
pub mod kinematics;
pub mod material;
pub mod spline;

pub use error::{Error, Result};
