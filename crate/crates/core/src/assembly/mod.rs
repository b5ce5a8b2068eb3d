//! Quadrature of elemental forces, tangents and material sensitivities, and
//! their assembly over the free/prescribed dof partition.

mod dofs;
mod element;
pub(crate) mod loads;
mod mesh;
mod system;

pub use dofs::{displaced, DofKind, DofMap, ReactionSet, ReactionSpec, Region, Support, DIM};
pub use element::{element_energy, element_terms, ElementRequest, ElementTerms, MATERIAL_NODES, SENS_COLS};
pub use loads::{AppliedLoad, EdgeMoment, EdgeTraction, LoadCase};
pub use mesh::{Discretization, EdgePointData, QuadPointData};
pub use system::{Factorization, GlobalTerms, System};
