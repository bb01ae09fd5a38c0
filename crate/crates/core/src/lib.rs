//! Cloth draping by direct per-frame energy minimization.
//!
//! The garment is advanced by minimizing a sum of physical energies (membrane
//! strain, bending, gravity, body collision, inertia) plus a covariance-based
//! inextensibility term that is locally relaxed where the garment penetrates
//! the body. Garments follow the skeleton through blend weights derived from
//! Gaussian body participation.

pub mod body;
pub mod energy;
pub mod error;
pub mod fixtures;
pub mod gradcheck;
pub mod mesh;
pub mod metrics;
pub mod skinning;
pub mod solver;

pub use error::{Error, Result};
pub use mesh::{TriMesh, Vec3};
