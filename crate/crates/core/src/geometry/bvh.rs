//! Bounding volume hierarchy over mesh faces, built with binned SAH.

use alloc::vec::Vec;

use super::mesh::{RayHit, TriMesh};
use crate::error::{Error, Result};
use crate::fields;
use crate::math::Vec3;

/// Hits closer than this are treated as self-intersections.
pub const MIN_HIT_T: f64 = 1e-6;

const MAX_LEAF: usize = 4;
const BINS: usize = 12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aabb {
    pub min: Vec3,
    pub max: Vec3,
}

impl Aabb {
    pub const EMPTY: Aabb = Aabb {
        min: Vec3::new(f64::INFINITY, f64::INFINITY, f64::INFINITY),
        max: Vec3::new(f64::NEG_INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY),
    };

    pub fn grow(&mut self, p: Vec3) {
        self.min = self.min.min(p);
        self.max = self.max.max(p);
    }

    pub fn union(&self, o: &Aabb) -> Aabb {
        Aabb {
            min: self.min.min(o.min),
            max: self.max.max(o.max),
        }
    }

    pub fn contains(&self, o: &Aabb) -> bool {
        (0..3).all(|a| self.min[a] <= o.min[a] && self.max[a] >= o.max[a])
    }

    fn surface_area(&self) -> f64 {
        let e = self.max - self.min;
        if e.x < 0.0 {
            return 0.0;
        }
        2.0 * (e.x * e.y + e.y * e.z + e.z * e.x)
    }

    fn padded(mut self) -> Aabb {
        let scale = self.min.x.abs().max(self.min.y.abs()).max(self.min.z.abs())
            .max(self.max.x.abs()).max(self.max.y.abs()).max(self.max.z.abs());
        let eps = 1e-9 * (1.0 + scale);
        self.min = self.min - Vec3::splat(eps);
        self.max = self.max + Vec3::splat(eps);
        self
    }

    /// Entry distance of the ray into the box within `[t_min, t_max]`.
    #[inline]
    fn hit(&self, origin: Vec3, inv_dir: Vec3, t_min: f64, t_max: f64) -> Option<f64> {
        let mut lo = t_min;
        let mut hi = t_max;
        for a in 0..3 {
            let t0 = (self.min[a] - origin[a]) * inv_dir[a];
            let t1 = (self.max[a] - origin[a]) * inv_dir[a];
            let (near, far) = if t0 <= t1 { (t0, t1) } else { (t1, t0) };
            // NaN (origin on a slab with a zero direction component) leaves
            // the interval unchanged.
            lo = lo.max(near);
            hi = hi.min(far);
        }
        (lo <= hi).then_some(lo)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Node {
    bounds: Aabb,
    /// Leaf: first index into `face_order`. Interior: index of the left
    /// child; the right child is the next node after the left subtree.
    start: u32,
    /// Number of faces for a leaf, zero for an interior node.
    count: u32,
    right: u32,
}

/// Counters from one traversal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct TraversalStats {
    pub nodes_visited: usize,
    pub triangle_tests: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BvhAccel {
    nodes: Vec<Node>,
    face_order: Vec<u32>,
}

struct BuildFace {
    bounds: Aabb,
    centroid: Vec3,
    face: u32,
}

impl BvhAccel {
    pub fn build(mesh: &TriMesh) -> Result<Self> {
        if mesh.is_empty() {
            return Err(Error::EmptyMesh);
        }
        let mut faces: Vec<BuildFace> = (0..mesh.face_count())
            .map(|f| {
                let mut b = Aabb::EMPTY;
                for v in mesh.triangle(f) {
                    b.grow(v);
                }
                BuildFace {
                    bounds: b.padded(),
                    centroid: (b.min + b.max) * 0.5,
                    face: f as u32,
                }
            })
            .collect();
        let mut nodes = Vec::with_capacity(2 * faces.len() / MAX_LEAF + 1);
        let n = faces.len();
        build_recursive(&mut faces, 0, n, &mut nodes);
        Ok(BvhAccel {
            nodes,
            face_order: faces.iter().map(|f| f.face).collect(),
        })
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    /// Face lists of all leaves, in traversal-array order.
    pub fn leaves(&self) -> Vec<&[u32]> {
        self.nodes
            .iter()
            .filter(|n| n.count > 0)
            .map(|n| &self.face_order[n.start as usize..(n.start + n.count) as usize])
            .collect()
    }

    /// Checks that every child box lies inside its parent's box.
    pub fn bounds_nested(&self) -> bool {
        self.nodes.iter().all(|n| {
            n.count > 0
                || (n.bounds.contains(&self.nodes[n.start as usize].bounds)
                    && n.bounds.contains(&self.nodes[n.right as usize].bounds))
        })
    }

    /// Closest hit with `t > MIN_HIT_T`. Ties in `t` go to the lower face
    /// index, so the result does not depend on traversal order.
    pub fn intersect(&self, mesh: &TriMesh, origin: Vec3, dir: Vec3) -> Result<Option<RayHit>> {
        Ok(self.intersect_with_stats(mesh, origin, dir)?.0)
    }

    pub fn intersect_with_stats(
        &self,
        mesh: &TriMesh,
        origin: Vec3,
        dir: Vec3,
    ) -> Result<(Option<RayHit>, TraversalStats)> {
        check_ray(origin, dir)?;
        let inv = Vec3::new(1.0 / dir.x, 1.0 / dir.y, 1.0 / dir.z);
        let mut stats = TraversalStats::default();
        let mut best: Option<RayHit> = None;
        let mut stack: Vec<u32> = Vec::with_capacity(64);
        stack.push(0);
        while let Some(idx) = stack.pop() {
            let node = &self.nodes[idx as usize];
            let t_max = best.map_or(f64::INFINITY, |h| h.t);
            stats.nodes_visited += 1;
            if node.bounds.hit(origin, inv, MIN_HIT_T, t_max).is_none() {
                continue;
            }
            if node.count > 0 {
                for &f in &self.face_order[node.start as usize..(node.start + node.count) as usize] {
                    stats.triangle_tests += 1;
                    if let Some(h) = mesh.intersect_face(f as usize, origin, dir, MIN_HIT_T) {
                        if closer(&h, best.as_ref()) {
                            best = Some(h);
                        }
                    }
                }
            } else {
                let left = node.start;
                let right = node.right;
                let dl = self.nodes[left as usize].bounds.hit(origin, inv, MIN_HIT_T, t_max);
                let dr = self.nodes[right as usize].bounds.hit(origin, inv, MIN_HIT_T, t_max);
                // Push the farther child first so the nearer one pops first.
                match (dl, dr) {
                    (Some(a), Some(b)) if a <= b => {
                        stack.push(right);
                        stack.push(left);
                    }
                    (Some(_), Some(_)) => {
                        stack.push(left);
                        stack.push(right);
                    }
                    (Some(_), None) => stack.push(left),
                    (None, Some(_)) => stack.push(right),
                    (None, None) => {}
                }
            }
        }
        Ok((best, stats))
    }
}

#[inline]
fn closer(h: &RayHit, best: Option<&RayHit>) -> bool {
    match best {
        None => true,
        Some(b) => h.t < b.t || (h.t == b.t && h.face < b.face),
    }
}

fn check_ray(origin: Vec3, dir: Vec3) -> Result<()> {
    if !origin.is_finite() {
        return Err(Error::NonFinite("ray origin"));
    }
    fields::check_unit(dir)
}

/// Linear scan over every face; the reference for [`BvhAccel::intersect`].
pub fn intersect_brute_force(mesh: &TriMesh, origin: Vec3, dir: Vec3) -> Result<Option<RayHit>> {
    check_ray(origin, dir)?;
    let mut best: Option<RayHit> = None;
    for f in 0..mesh.face_count() {
        if let Some(h) = mesh.intersect_face(f, origin, dir, MIN_HIT_T) {
            if closer(&h, best.as_ref()) {
                best = Some(h);
            }
        }
    }
    Ok(best)
}

fn build_recursive(faces: &mut [BuildFace], start: usize, end: usize, nodes: &mut Vec<Node>) -> u32 {
    let slice = &mut faces[start..end];
    let mut bounds = Aabb::EMPTY;
    let mut centroid_bounds = Aabb::EMPTY;
    for f in slice.iter() {
        bounds = bounds.union(&f.bounds);
        centroid_bounds.grow(f.centroid);
    }
    let idx = nodes.len() as u32;
    nodes.push(Node {
        bounds,
        start: start as u32,
        count: slice.len() as u32,
        right: 0,
    });
    if slice.len() <= MAX_LEAF {
        return idx;
    }
    let extent = centroid_bounds.max - centroid_bounds.min;
    let axis = if extent.x >= extent.y && extent.x >= extent.z {
        0
    } else if extent.y >= extent.z {
        1
    } else {
        2
    };
    let mid = if extent[axis] <= 0.0 {
        slice.len() / 2
    } else {
        sah_split(slice, axis, centroid_bounds.min[axis], extent[axis])
            .unwrap_or_else(|| median_split(slice, axis))
    };
    let left = build_recursive(faces, start, start + mid, nodes);
    let right = build_recursive(faces, start + mid, end, nodes);
    let node = &mut nodes[idx as usize];
    node.count = 0;
    node.start = left;
    node.right = right;
    idx
}

fn median_split(slice: &mut [BuildFace], axis: usize) -> usize {
    let mid = slice.len() / 2;
    slice.select_nth_unstable_by(mid, |a, b| a.centroid[axis].total_cmp(&b.centroid[axis]));
    mid
}

/// Partitions `slice` at the cheapest of `BINS - 1` candidate planes and
/// returns the split position, or `None` if every face lands on one side.
fn sah_split(slice: &mut [BuildFace], axis: usize, lo: f64, extent: f64) -> Option<usize> {
    let bin_of = |c: f64| -> usize { (((c - lo) / extent * BINS as f64) as usize).min(BINS - 1) };
    let mut counts = [0usize; BINS];
    let mut boxes = [Aabb::EMPTY; BINS];
    for f in slice.iter() {
        let b = bin_of(f.centroid[axis]);
        counts[b] += 1;
        boxes[b] = boxes[b].union(&f.bounds);
    }
    let mut best_cost = f64::INFINITY;
    let mut best_plane = 0;
    for plane in 1..BINS {
        let (mut lb, mut rb) = (Aabb::EMPTY, Aabb::EMPTY);
        let (mut lc, mut rc) = (0, 0);
        for b in 0..plane {
            lb = lb.union(&boxes[b]);
            lc += counts[b];
        }
        for b in plane..BINS {
            rb = rb.union(&boxes[b]);
            rc += counts[b];
        }
        if lc == 0 || rc == 0 {
            continue;
        }
        let cost = lb.surface_area() * lc as f64 + rb.surface_area() * rc as f64;
        if cost < best_cost {
            best_cost = cost;
            best_plane = plane;
        }
    }
    if best_plane == 0 {
        return None;
    }
    let mut i = 0;
    for j in 0..slice.len() {
        if bin_of(slice[j].centroid[axis]) < best_plane {
            slice.swap(i, j);
            i += 1;
        }
    }
    (i > 0 && i < slice.len()).then_some(i)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::Vec2;
    use alloc::vec;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_soup(n: usize, seed: u64) -> TriMesh {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut pos = Vec::new();
        let mut faces = Vec::new();
        for i in 0..n {
            let c = Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
            for _ in 0..3 {
                pos.push(c + Vec3::new(rng.random_range(-0.2..0.2), rng.random_range(-0.2..0.2), rng.random_range(-0.2..0.2)));
            }
            let b = 3 * i as u32;
            faces.push([b, b + 1, b + 2]);
        }
        let uvs = (0..pos.len()).map(|i| Vec2::new((i % 7) as f64 / 7.0, (i % 5) as f64 / 5.0)).collect();
        TriMesh::new(pos, uvs, faces).unwrap()
    }

    fn random_dir(rng: &mut ChaCha8Rng) -> Vec3 {
        loop {
            let v = Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
            if v.norm() > 0.1 && v.norm() <= 1.0 {
                return v.normalized().unwrap();
            }
        }
    }

    #[test]
    fn single_triangle_is_one_leaf() {
        let m = random_soup(1, 1);
        let bvh = BvhAccel::build(&m).unwrap();
        assert_eq!(bvh.leaves(), vec![&[0u32][..]]);
    }

    #[test]
    fn empty_mesh_rejected() {
        assert_eq!(BvhAccel::build(&TriMesh::empty()), Err(Error::EmptyMesh));
    }

    #[test]
    fn every_face_in_one_leaf_and_bounds_nest() {
        let m = random_soup(500, 2);
        let bvh = BvhAccel::build(&m).unwrap();
        let mut seen = vec![0u32; m.face_count()];
        for leaf in bvh.leaves() {
            for &f in leaf {
                seen[f as usize] += 1;
            }
        }
        assert!(seen.iter().all(|&c| c == 1));
        assert!(bvh.bounds_nested());
    }

    #[test]
    fn matches_brute_force() {
        let m = random_soup(100, 3);
        let bvh = BvhAccel::build(&m).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut hits = 0;
        for _ in 0..1000 {
            let o = random_dir(&mut rng) * 3.0;
            let target = Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
            let d = (target - o).normalized().unwrap();
            let a = bvh.intersect(&m, o, d).unwrap();
            let b = intersect_brute_force(&m, o, d).unwrap();
            match (a, b) {
                (Some(a), Some(b)) => {
                    hits += 1;
                    assert_eq!(a.face, b.face);
                    assert!((a.t - b.t).abs() < 1e-9);
                    m.check_hit(&a).unwrap();
                }
                (None, None) => {}
                other => panic!("disagreement: {other:?}"),
            }
        }
        assert!(hits > 100);
    }

    #[test]
    fn disjoint_clusters_prune() {
        // two far-apart groups; rays aimed at one never test the other
        let mut m = random_soup(200, 5);
        let shifted: Vec<Vec3> = m
            .positions()
            .iter()
            .enumerate()
            .map(|(i, p)| if i < 300 { *p + Vec3::new(100.0, 0.0, 0.0) } else { *p })
            .collect();
        m = TriMesh::new(shifted, m.uvs().to_vec(), m.faces().to_vec()).unwrap();
        let bvh = BvhAccel::build(&m).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..100 {
            let o = Vec3::new(0.0, 0.0, 5.0);
            let t = Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), 0.0);
            let d = (t - o).normalized().unwrap();
            let (_, stats) = bvh.intersect_with_stats(&m, o, d).unwrap();
            assert!(stats.triangle_tests <= m.face_count());
            assert!(stats.triangle_tests < m.face_count() / 2);
        }
    }

    #[test]
    fn rejects_non_unit_direction() {
        let m = random_soup(3, 7);
        let bvh = BvhAccel::build(&m).unwrap();
        assert!(matches!(
            bvh.intersect(&m, Vec3::ZERO, Vec3::new(0.0, 2.0, 0.0)),
            Err(Error::NonUnitDirection { .. })
        ));
    }
}
