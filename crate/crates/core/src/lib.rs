//! Constant mean curvature vertical graphs in the homogeneous spaces E(κ,τ).
//!
//! The crate is organized bottom-up:
//!
//! - [`model`]: metric, orthonormal frame, connection and curvature of the unified model.
//! - [`graph`]: pointwise geometry of vertical graphs `z = f(x, y)`.
//! - [`solver`]: finite-difference Dirichlet problem for prescribed constant mean curvature.
//! - [`rotational`]: rotational H-spheres by ODE shooting, and vertical CMC cylinders.
//! - [`stability`]: discrete Jacobi operators and their smallest eigenvalue.
//! - [`harness`]: height-bound experiments, reports and the invariant checks behind the CLI.

pub mod error;
pub mod graph;
pub mod harness;
pub mod model;
pub mod rotational;
mod small;
pub mod solver;
pub mod stability;

pub use error::{Error, Result};
pub use graph::{Jet2, Orientation, ShapeData};
pub use model::{Point3, SpaceParams};
