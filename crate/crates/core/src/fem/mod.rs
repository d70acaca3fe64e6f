//! Meshes, quadrature, P1 assembly and linear solves.

pub mod assembly;
pub mod mesh;
pub mod quadrature;
pub mod solve;

pub use assembly::{assemble, AssembledOperators, MaterialPoint, PointSite};
pub use mesh::{build_mesh, Mesh, MeshSpec};
pub use solve::{solve_spd, SpdSolver};
