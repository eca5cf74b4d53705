//! Vertex clustering: every vertex is snapped to a voxel of a uniform grid
//! (optionally laid over contracted space), each occupied voxel becomes one
//! vertex and faces that lose a corner are dropped.

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;

use super::mesh::TriMesh;
use crate::error::{Error, Result};
use crate::fields::{contract, uncontract};
use crate::math::{floor, Vec2, Vec3};

/// Result of grouping vertices by voxel.
#[derive(Debug, Clone, PartialEq)]
pub struct Clustering {
    /// Cluster id of every original vertex.
    pub mapping: Vec<u32>,
    /// World-space representative position of every cluster.
    pub positions: Vec<Vec3>,
}

/// Groups vertices by voxel. Cluster ids follow first appearance in vertex
/// order. A cluster's position is the centroid of its members, taken in the
/// space the voxels live in and mapped back to world space.
pub fn cluster_vertices(mesh: &TriMesh, voxel_size: f64, in_contracted_space: bool) -> Result<Clustering> {
    if mesh.is_empty() {
        return Err(Error::EmptyMesh);
    }
    if !(voxel_size > 0.0) || !voxel_size.is_finite() {
        return Err(Error::config("voxel size must be positive"));
    }
    let space: Vec<Vec3> = if in_contracted_space {
        mesh.positions().iter().map(|&p| contract(p)).collect::<Result<_>>()?
    } else {
        mesh.positions().to_vec()
    };
    let mut ids: BTreeMap<[i64; 3], u32> = BTreeMap::new();
    let mut mapping = Vec::with_capacity(space.len());
    let mut sums: Vec<(Vec3, usize, usize)> = Vec::new();
    for (i, q) in space.iter().enumerate() {
        let key = [
            floor(q.x / voxel_size) as i64,
            floor(q.y / voxel_size) as i64,
            floor(q.z / voxel_size) as i64,
        ];
        let next = sums.len() as u32;
        let id = *ids.entry(key).or_insert(next);
        if id == next {
            sums.push((Vec3::ZERO, 0, i));
        }
        let s = &mut sums[id as usize];
        s.0 += *q;
        s.1 += 1;
        mapping.push(id);
    }
    let positions = sums
        .into_iter()
        .map(|(sum, count, first)| {
            if count == 1 {
                Ok(mesh.positions()[first])
            } else if in_contracted_space {
                uncontract(sum / count as f64)
            } else {
                Ok(sum / count as f64)
            }
        })
        .collect::<Result<_>>()?;
    Ok(Clustering { mapping, positions })
}

/// Simplified mesh plus the vertex → cluster mapping.
pub fn cluster_simplify_with_mapping(
    mesh: &TriMesh,
    voxel_size: f64,
    in_contracted_space: bool,
) -> Result<(TriMesh, Vec<u32>)> {
    let clustering = cluster_vertices(mesh, voxel_size, in_contracted_space)?;
    let faces: Vec<[u32; 3]> = mesh
        .faces()
        .iter()
        .map(|f| f.map(|v| clustering.mapping[v as usize]))
        .filter(|f| f[0] != f[1] && f[1] != f[2] && f[0] != f[2])
        .collect();
    let placeholder = vec![Vec2::default(); clustering.positions.len()];
    let clustered = TriMesh::new(clustering.positions, placeholder, faces)?;
    let out = propagate_uvs(mesh, &clustered, &clustering.mapping)?;
    Ok((out, clustering.mapping))
}

/// Vertex-clustering simplification; see [`cluster_vertices`].
pub fn cluster_simplify(mesh: &TriMesh, voxel_size: f64, in_contracted_space: bool) -> Result<TriMesh> {
    cluster_simplify_with_mapping(mesh, voxel_size, in_contracted_space).map(|(m, _)| m)
}

/// Gives every cluster the UV of its member closest to the cluster
/// position; ties go to the lowest vertex index.
pub fn propagate_uvs(original: &TriMesh, clustered: &TriMesh, mapping: &[u32]) -> Result<TriMesh> {
    if mapping.len() != original.vertex_count() {
        return Err(Error::DimensionMismatch {
            what: "cluster mapping",
            expected: original.vertex_count(),
            got: mapping.len(),
        });
    }
    let n = clustered.vertex_count();
    let mut best: Vec<Option<(f64, usize)>> = vec![None; n];
    for (i, &c) in mapping.iter().enumerate() {
        let c = c as usize;
        if c >= n {
            return Err(Error::InvalidMesh("mapping points past the clustered vertices".into()));
        }
        let d = (original.positions()[i] - clustered.positions()[c]).norm_squared();
        match best[c] {
            Some((bd, _)) if bd <= d => {}
            _ => best[c] = Some((d, i)),
        }
    }
    let uvs = best
        .into_iter()
        .map(|b| {
            b.map(|(_, i)| original.uvs()[i])
                .ok_or_else(|| Error::InvalidMesh("cluster without members".into()))
        })
        .collect::<Result<Vec<_>>>()?;
    TriMesh::new(clustered.positions().to_vec(), uvs, clustered.faces().to_vec())
}
