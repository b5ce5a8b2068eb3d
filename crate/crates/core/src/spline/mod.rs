//! Tensor-product NURBS patches evaluated element by element through Bézier extraction.

mod generators;
mod knots;
mod patch;
mod quadrature;

pub use generators::{make_curved_patch, make_cylinder, make_plate, make_strip, HeightProfile};
pub use knots::{bernstein, bezier_extraction, KnotVector, Span};
pub use patch::{BasisValues, Edge, NurbsPatch, ParamCoord, PatchDocument};
pub use quadrature::{gauss_legendre, tensor_rule, QuadPoint};
