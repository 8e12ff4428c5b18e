//! Device footprint, material parameters and meshing.

mod geometry;
mod materials;
mod mesh;

pub use geometry::{
    angular_separation, build_geometry, ArmFrame, DeviceGeometry, Footprint, Terminal,
};
pub use materials::MaterialParams;
pub use mesh::{generate_mesh, Mesh, NodeTag};
