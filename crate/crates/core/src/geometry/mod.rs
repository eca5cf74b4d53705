//! Indexed triangle meshes, vertex-clustering simplification and ray casting.

mod bvh;
mod cluster;
mod mesh;

pub use bvh::{intersect_brute_force, Aabb, BvhAccel, TraversalStats, MIN_HIT_T};
pub use cluster::{cluster_simplify, cluster_simplify_with_mapping, cluster_vertices, propagate_uvs, Clustering};
pub use mesh::{RayHit, TriMesh};
