//! Mesh, point-cloud and voxel primitives with the operations built on them.

mod cloud;
mod grid;
pub mod io;
mod marching_cubes;
mod mc_tables;
mod mesh;
mod metrics;
mod nearest;
mod raycast;
mod sampling;
pub mod shapes;
mod voxelize;

pub use cloud::{PointCloud, Source};
pub use grid::{Lattice, VoxelGrid};
pub use marching_cubes::{marching_cubes, NodeGrid};
pub use mesh::{normalize_mesh, Aabb, Normalized, TriangleMesh};
pub use metrics::{chamfer_distance, chamfer_points, jaccard_similarity};
pub use nearest::NearestIndex;
pub use raycast::{ray_mesh_intersect, ray_mesh_intersect_brute, ray_triangle, Hit, RayCaster, T_MIN};
pub use sampling::{random_subset, sample_surface, uniform_in_cube};
pub use voxelize::{voxelize, voxelize_parity};

/// Box over which reconstructions are extracted and voxelized.
pub fn evaluation_box() -> Aabb {
    Aabb::cube(1.1)
}

/// The shared 40^3 lattice over the evaluation box.
pub fn evaluation_lattice() -> Lattice {
    Lattice::covering(&evaluation_box(), 40).expect("static lattice")
}
