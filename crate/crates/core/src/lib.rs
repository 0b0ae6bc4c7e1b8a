//! Numerical checks of weighted Reilly-type identities and weighted
//! Minkowski inequalities for domains in hyperbolic space, Euclidean space
//! and the open hemisphere.

pub mod error;
pub mod domain;
pub mod field;
pub mod flow;
pub mod minkowski;
pub mod neumann;
pub mod quadrature;
pub mod reilly;
pub mod spaceform;
pub mod spectral;

pub use error::{Error, Result};
pub use field::{Jet, ScalarField};
pub use spaceform::{Curvature, Direction, PolarPoint, SpaceForm};
