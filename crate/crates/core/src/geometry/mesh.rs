use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math::{Vec2, Vec3};

/// Indexed triangle mesh with one texture coordinate per vertex.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TriMesh {
    positions: Vec<Vec3>,
    uvs: Vec<Vec2>,
    faces: Vec<[u32; 3]>,
}

/// Closest ray–mesh intersection.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RayHit {
    pub t: f64,
    pub face: usize,
    /// Weights of the face's three vertices; non-negative, summing to one.
    pub barycentric: [f64; 3],
    pub point: Vec3,
    pub uv: Vec2,
}

impl TriMesh {
    pub fn new(positions: Vec<Vec3>, uvs: Vec<Vec2>, faces: Vec<[u32; 3]>) -> Result<Self> {
        if positions.len() != uvs.len() {
            return Err(Error::DimensionMismatch {
                what: "per-vertex UVs",
                expected: positions.len(),
                got: uvs.len(),
            });
        }
        if positions.len() > u32::MAX as usize {
            return Err(Error::InvalidMesh("too many vertices".into()));
        }
        if positions.iter().any(|p| !p.is_finite()) || uvs.iter().any(|t| !t.x.is_finite() || !t.y.is_finite()) {
            return Err(Error::NonFinite("mesh attributes"));
        }
        let n = positions.len() as u32;
        for (i, f) in faces.iter().enumerate() {
            if f.iter().any(|&v| v >= n) {
                return Err(Error::InvalidMesh(format!("face {i} references a missing vertex")));
            }
            if f[0] == f[1] || f[1] == f[2] || f[0] == f[2] {
                return Err(Error::InvalidMesh(format!("face {i} repeats a vertex")));
            }
        }
        Ok(TriMesh { positions, uvs, faces })
    }

    pub fn empty() -> Self {
        TriMesh::default()
    }

    pub fn positions(&self) -> &[Vec3] {
        &self.positions
    }

    pub fn uvs(&self) -> &[Vec2] {
        &self.uvs
    }

    pub fn faces(&self) -> &[[u32; 3]] {
        &self.faces
    }

    pub fn vertex_count(&self) -> usize {
        self.positions.len()
    }

    pub fn face_count(&self) -> usize {
        self.faces.len()
    }

    pub fn is_empty(&self) -> bool {
        self.faces.is_empty()
    }

    pub fn triangle(&self, face: usize) -> [Vec3; 3] {
        let f = self.faces[face];
        [
            self.positions[f[0] as usize],
            self.positions[f[1] as usize],
            self.positions[f[2] as usize],
        ]
    }

    /// Axis-aligned bounds of all vertices, `None` for a vertex-less mesh.
    pub fn bounds(&self) -> Option<(Vec3, Vec3)> {
        let first = *self.positions.first()?;
        Some(
            self.positions
                .iter()
                .fold((first, first), |(lo, hi), &p| (lo.min(p), hi.max(p))),
        )
    }

    /// Möller–Trumbore test of one face; `None` on a miss, a parallel ray
    /// or `t <= t_min`.
    #[inline]
    pub fn intersect_face(&self, face: usize, origin: Vec3, dir: Vec3, t_min: f64) -> Option<RayHit> {
        let [v0, v1, v2] = self.triangle(face);
        let e1 = v1 - v0;
        let e2 = v2 - v0;
        let pvec = dir.cross(e2);
        let det = e1.dot(pvec);
        if det == 0.0 || !det.is_finite() {
            return None;
        }
        let inv = 1.0 / det;
        let tvec = origin - v0;
        let u = tvec.dot(pvec) * inv;
        if !(0.0..=1.0).contains(&u) {
            return None;
        }
        let qvec = tvec.cross(e1);
        let v = dir.dot(qvec) * inv;
        if v < 0.0 || u + v > 1.0 {
            return None;
        }
        let t = e2.dot(qvec) * inv;
        if t <= t_min || !t.is_finite() {
            return None;
        }
        Some(self.hit_from_barycentric(face, t, [1.0 - u - v, u, v]))
    }

    pub(crate) fn hit_from_barycentric(&self, face: usize, t: f64, bary: [f64; 3]) -> RayHit {
        let f = self.faces[face];
        let mut point = Vec3::ZERO;
        let mut uv = Vec2::default();
        for k in 0..3 {
            let i = f[k] as usize;
            point += self.positions[i] * bary[k];
            uv.x += self.uvs[i].x * bary[k];
            uv.y += self.uvs[i].y * bary[k];
        }
        RayHit {
            t,
            face,
            barycentric: bary,
            point,
            uv,
        }
    }

    /// Checks that `hit` is consistent with this mesh: valid face, proper
    /// barycentrics and matching point/UV.
    pub fn check_hit(&self, hit: &RayHit) -> Result<()> {
        if hit.face >= self.faces.len() {
            return Err(Error::InconsistentHit(format!("face {} out of range", hit.face)));
        }
        let b = hit.barycentric;
        if b.iter().any(|w| *w < -1e-9) || ((b[0] + b[1] + b[2]) - 1.0).abs() > 1e-9 {
            return Err(Error::InconsistentHit("invalid barycentric weights".into()));
        }
        let expect = self.hit_from_barycentric(hit.face, hit.t, b);
        if (expect.point - hit.point).norm() > 1e-6
            || (expect.uv.x - hit.uv.x).abs() > 1e-6
            || (expect.uv.y - hit.uv.y).abs() > 1e-6
        {
            return Err(Error::InconsistentHit(format!(
                "hit on face {} disagrees with the mesh",
                hit.face
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn unit_triangle() -> TriMesh {
        TriMesh::new(
            vec![Vec3::new(-1.0, -1.0, 0.0), Vec3::new(1.0, -1.0, 0.0), Vec3::new(0.0, 1.0, 0.0)],
            vec![Vec2::new(0.0, 0.0), Vec2::new(1.0, 0.0), Vec2::new(0.5, 1.0)],
            vec![[0, 1, 2]],
        )
        .unwrap()
    }

    #[test]
    fn validation() {
        let p = vec![Vec3::ZERO; 3];
        assert!(TriMesh::new(p.clone(), vec![Vec2::default(); 2], vec![[0, 1, 2]]).is_err());
        assert!(TriMesh::new(p.clone(), vec![Vec2::default(); 3], vec![[0, 1, 3]]).is_err());
        assert!(TriMesh::new(p, vec![Vec2::default(); 3], vec![[0, 1, 1]]).is_err());
    }

    #[test]
    fn axis_aligned_hit() {
        let m = unit_triangle();
        let hit = m
            .intersect_face(0, Vec3::new(0.0, 0.0, -1.0), Vec3::new(0.0, 0.0, 1.0), 1e-6)
            .unwrap();
        assert!((hit.t - 1.0).abs() < 1e-15);
        assert!(hit.point.norm() < 1e-15);
        m.check_hit(&hit).unwrap();
    }

    #[test]
    fn parallel_ray_misses() {
        let m = unit_triangle();
        assert!(m
            .intersect_face(0, Vec3::new(-5.0, 0.0, 0.0), Vec3::new(1.0, 0.0, 0.0), 1e-6)
            .is_none());
    }

    #[test]
    fn hand_computed_uv() {
        // Ray through (0.25, -0.5, 0): solve p = v0 + u (v1 - v0) + v (v2 - v0)
        // -> u = 0.5, v = 0.25, w = 0.25.
        let m = unit_triangle();
        let hit = m
            .intersect_face(0, Vec3::new(0.25, -0.5, 2.0), Vec3::new(0.0, 0.0, -1.0), 1e-6)
            .unwrap();
        let b = hit.barycentric;
        assert!((b[0] - 0.25).abs() < 1e-12 && (b[1] - 0.5).abs() < 1e-12 && (b[2] - 0.25).abs() < 1e-12);
        // uv = 0.25*(0,0) + 0.5*(1,0) + 0.25*(0.5,1) = (0.625, 0.25)
        assert!((hit.uv.x - 0.625).abs() < 1e-12);
        assert!((hit.uv.y - 0.25).abs() < 1e-12);
    }
}
