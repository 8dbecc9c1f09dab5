//! Meshes, point clouds, rigid transforms and the spatial queries every other
//! stage is built on.

mod aabb;
mod bvh;
mod cloud;
mod components;
mod downsample;
pub mod io;
mod kdtree;
mod mesh;
mod normals;
mod primitives;
mod sampling;
mod transform;
mod triangle;

pub use aabb::Aabb;
pub use bvh::{degenerate_triangles, MeshHit, MeshIndex};
pub use cloud::PointCloud;
pub use components::{component_triangles, connected_components, largest_component};
pub use downsample::voxel_downsample;
pub use io::{read_mesh, write_mesh};
pub use kdtree::PointIndex;
pub use mesh::{TriMesh, DEGENERATE_AREA};
pub use normals::{estimate_normals, estimate_normals_lenient};
pub use primitives::icosphere;
pub use sampling::{sample_surface, sample_surface_with_ids, AreaSampler};
pub use transform::{apply_transform, orthonormalize, RigidTransform, Transformable};
pub use triangle::{closest_point_on_triangle, TriangleFeature};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GeometryError {
    #[error("mesh is empty")]
    EmptyMesh,
    #[error("{} point(s) have a rank-deficient neighbourhood", indices.len())]
    DegenerateNeighborhood { indices: Vec<usize> },
    #[error("invalid mesh: {0}")]
    InvalidMesh(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("invalid transform: {0}")]
    InvalidTransform(String),
    #[error("i/o error: {0}")]
    Io(String),
    #[error("malformed file: {0}")]
    Format(String),
}
