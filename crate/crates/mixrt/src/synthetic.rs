//! Procedural scenes with analytically colored surfaces, used as
//! desk-scale training data.

use std::f64::consts::PI;
use std::path::Path;
use std::str::FromStr;

use mixrt_core::geometry::{BvhAccel, TriMesh};
use mixrt_core::render::{Camera, Image};
use mixrt_core::{Vec2, Vec3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::dataset::{write_json, CameraRecord, DatasetManifest, CAMERAS_FILE};
use crate::error::{MixrtError, Result};
use crate::image_io::write_image;
use crate::mesh_io::write_glb;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SceneKind {
    Tri,
    BoxRoom,
    Sphere,
}

impl SceneKind {
    pub fn name(self) -> &'static str {
        match self {
            SceneKind::Tri => "tri",
            SceneKind::BoxRoom => "box-room",
            SceneKind::Sphere => "sphere",
        }
    }
}

impl FromStr for SceneKind {
    type Err = MixrtError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tri" => Ok(SceneKind::Tri),
            "box-room" => Ok(SceneKind::BoxRoom),
            "sphere" => Ok(SceneKind::Sphere),
            _ => Err(MixrtError::Usage(format!("unknown scene {s:?} (expected tri, box-room or sphere)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyntheticOptions {
    pub kind: SceneKind,
    pub seed: u64,
    pub width: u32,
    pub height: u32,
    pub train_views: usize,
    pub test_views: usize,
    /// Ground truth at a hit `p` seen along `d` is `pattern(p + h d)`.
    pub view_offset: f64,
    /// Quads per wall edge (box-room) or latitude rings (sphere).
    pub tessellation: u32,
}

impl SyntheticOptions {
    pub fn new(kind: SceneKind) -> Self {
        let (w, train, test, tess) = match kind {
            SceneKind::Tri => (64, 4, 1, 1),
            SceneKind::BoxRoom => (128, 32, 8, 200),
            SceneKind::Sphere => (128, 32, 8, 64),
        };
        SyntheticOptions {
            kind,
            seed: 0,
            width: w,
            height: w,
            train_views: train,
            test_views: test,
            view_offset: 0.0,
            tessellation: tess,
        }
    }
}

/// Smooth color field over space, each channel in `[0.05, 0.95]`.
pub fn pattern(p: Vec3) -> [f64; 3] {
    let (x, y, z) = (p.x, p.y, p.z);
    [
        0.5 + 0.3 * (7.0 * x + 3.1 * y + 0.4).sin() + 0.15 * (4.3 * z - 5.2 * x + 1.3).sin(),
        0.5 + 0.3 * (6.1 * y - 2.7 * z + 2.0).sin() + 0.15 * (5.5 * x + 3.3 * y - 0.7).sin(),
        0.5 + 0.3 * (6.7 * z + 2.2 * x - 1.1).sin() + 0.15 * (3.9 * y - 4.8 * z + 2.6).sin(),
    ]
}

/// Closed cube of half-extent 0.5, `n x n` quads per wall, each wall in
/// its own cell of a 3x2 UV atlas (with a margin between cells).
pub fn box_room_mesh(n: u32) -> Result<TriMesh> {
    if n == 0 {
        return Err(MixrtError::Usage("tessellation must be positive".into()));
    }
    let margin = 0.02;
    let mut positions = Vec::new();
    let mut uvs = Vec::new();
    let mut faces = Vec::new();
    // (normal axis, side); the two tangent axes follow cyclically
    for wall in 0..6u32 {
        let axis = (wall / 2) as usize;
        let side = if wall % 2 == 0 { -0.5 } else { 0.5 };
        let (ua, va) = ((axis + 1) % 3, (axis + 2) % 3);
        let cell = Vec2::new((wall % 3) as f64 / 3.0, (wall / 3) as f64 / 2.0);
        let size = Vec2::new(1.0 / 3.0 - 2.0 * margin, 0.5 - 2.0 * margin);
        let base = positions.len() as u32;
        for j in 0..=n {
            for i in 0..=n {
                let (a, b) = (i as f64 / n as f64, j as f64 / n as f64);
                let mut p = Vec3::ZERO;
                p[axis] = side;
                p[ua] = a - 0.5;
                p[va] = b - 0.5;
                positions.push(p);
                uvs.push(Vec2::new(cell.x + margin + a * size.x, cell.y + margin + b * size.y));
            }
        }
        let row = n + 1;
        for j in 0..n {
            for i in 0..n {
                let v00 = base + j * row + i;
                let (v10, v01, v11) = (v00 + 1, v00 + row, v00 + row + 1);
                faces.push([v00, v10, v11]);
                faces.push([v00, v11, v01]);
            }
        }
    }
    Ok(TriMesh::new(positions, uvs, faces)?)
}

/// Latitude-longitude sphere of radius 0.5 with a UV seam.
pub fn sphere_mesh(rings: u32) -> Result<TriMesh> {
    if rings < 2 {
        return Err(MixrtError::Usage("sphere needs at least 2 rings".into()));
    }
    let segments = 2 * rings;
    let mut positions = Vec::new();
    let mut uvs = Vec::new();
    for j in 0..=rings {
        let theta = PI * j as f64 / rings as f64;
        for i in 0..=segments {
            let phi = 2.0 * PI * i as f64 / segments as f64;
            positions.push(Vec3::new(theta.sin() * phi.cos(), theta.sin() * phi.sin(), theta.cos()) * 0.5);
            uvs.push(Vec2::new(i as f64 / segments as f64, j as f64 / rings as f64));
        }
    }
    let row = segments + 1;
    let mut faces = Vec::new();
    for j in 0..rings {
        for i in 0..segments {
            let v00 = j * row + i;
            let (v10, v01, v11) = (v00 + 1, v00 + row, v00 + row + 1);
            if j != 0 {
                faces.push([v00, v10, v11]);
            }
            if j != rings - 1 {
                faces.push([v00, v11, v01]);
            }
        }
    }
    // pole rows keep their duplicated vertices; faces never repeat an index
    Ok(TriMesh::new(positions, uvs, faces)?)
}

pub fn triangle_mesh() -> TriMesh {
    TriMesh::new(
        vec![Vec3::new(-0.5, -0.4, 0.0), Vec3::new(0.5, -0.4, 0.0), Vec3::new(0.0, 0.5, 0.0)],
        vec![Vec2::new(0.0, 0.0), Vec2::new(1.0, 0.0), Vec2::new(0.5, 1.0)],
        vec![[0, 1, 2]],
    )
    .expect("valid triangle")
}

/// `n` near-uniform unit directions; `offset` in `[0, 1)` shifts the
/// spiral so different offsets give interleaved sets.
pub fn fibonacci_directions(n: usize, offset: f64) -> Vec<Vec3> {
    let golden = PI * (3.0 - 5f64.sqrt());
    (0..n)
        .map(|i| {
            let z = 1.0 - 2.0 * (i as f64 + 0.5) / n as f64;
            let r = (1.0 - z * z).sqrt();
            let a = golden * i as f64 + 2.0 * PI * offset;
            Vec3::new(r * a.cos(), r * a.sin(), z)
        })
        .collect()
}

fn up_for(dir: Vec3) -> Vec3 {
    if dir.z.abs() < 0.9 {
        Vec3::new(0.0, 0.0, 1.0)
    } else {
        Vec3::new(0.0, 1.0, 0.0)
    }
}

pub fn scene_mesh(opts: &SyntheticOptions) -> Result<TriMesh> {
    match opts.kind {
        SceneKind::Tri => Ok(triangle_mesh()),
        SceneKind::BoxRoom => box_room_mesh(opts.tessellation),
        SceneKind::Sphere => sphere_mesh(opts.tessellation),
    }
}

fn cameras(opts: &SyntheticOptions, count: usize, offset: f64, rng: &mut ChaCha8Rng) -> Result<Vec<Camera>> {
    let (w, h) = (opts.width, opts.height);
    let mut out = Vec::with_capacity(count);
    match opts.kind {
        SceneKind::BoxRoom => {
            for d in fibonacci_directions(count, offset) {
                let eye = loop {
                    let p = Vec3::new(
                        rng.random_range(-1.0..1.0),
                        rng.random_range(-1.0..1.0),
                        rng.random_range(-1.0..1.0),
                    );
                    if p.norm() <= 1.0 {
                        break p * 0.15;
                    }
                };
                out.push(Camera::look_at(eye, eye + d, up_for(d), 60f64.to_radians(), w, h)?);
            }
        }
        SceneKind::Sphere => {
            for d in fibonacci_directions(count, offset) {
                let jitter = rng.random_range(-0.1..0.1);
                out.push(Camera::look_at(d * (1.8 + jitter), Vec3::ZERO, up_for(d), 40f64.to_radians(), w, h)?);
            }
        }
        SceneKind::Tri => {
            for i in 0..count {
                let a = 2.0 * PI * (i as f64 + offset) / count.max(1) as f64;
                let eye = Vec3::new(0.25 * a.cos(), 0.25 * a.sin(), 1.2 + rng.random_range(-0.05..0.05));
                out.push(Camera::look_at(eye, Vec3::ZERO, Vec3::new(0.0, 1.0, 0.0), 50f64.to_radians(), w, h)?);
            }
        }
    }
    Ok(out)
}

/// Ground-truth image: first hit of each pixel-center ray, colored by the
/// pattern at the (optionally view-offset) hit point.
pub fn render_ground_truth(
    mesh: &TriMesh,
    bvh: &BvhAccel,
    camera: &Camera,
    view_offset: f64,
    background: [f64; 3],
) -> Result<Image> {
    let rows: Vec<Vec<[f64; 3]>> = (0..camera.height)
        .into_par_iter()
        .map(|y| {
            (0..camera.width)
                .map(|x| {
                    let (o, d) = camera.pixel_ray(x, y)?;
                    Ok(match bvh.intersect(mesh, o, d)? {
                        Some(hit) => pattern(hit.point + d * view_offset),
                        None => background,
                    })
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;
    Ok(Image::from_pixels(camera.width, camera.height, rows.concat())?)
}

/// In-memory synthetic dataset.
#[derive(Debug, Clone)]
pub struct SyntheticScene {
    pub mesh: TriMesh,
    pub train: Vec<(Camera, Image)>,
    pub test: Vec<(Camera, Image)>,
}

pub fn generate(opts: &SyntheticOptions) -> Result<SyntheticScene> {
    let mesh = scene_mesh(opts)?;
    let bvh = BvhAccel::build(&mesh)?;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let train_cams = cameras(opts, opts.train_views, 0.0, &mut rng)?;
    let test_cams = cameras(opts, opts.test_views, 0.5, &mut rng)?;
    let render = |cams: Vec<Camera>| -> Result<Vec<(Camera, Image)>> {
        cams.into_iter()
            .map(|c| Ok((c, render_ground_truth(&mesh, &bvh, &c, opts.view_offset, [0.0; 3])?)))
            .collect()
    };
    let train = render(train_cams)?;
    let test = render(test_cams)?;
    Ok(SyntheticScene { mesh, train, test })
}

/// Writes `mesh.glb`, `cameras.json`, `train/NNN.png` and `test/NNN.png`.
pub fn write_dataset(dir: &Path, opts: &SyntheticOptions) -> Result<DatasetManifest> {
    let scene = generate(opts)?;
    for sub in ["train", "test"] {
        let p = dir.join(sub);
        std::fs::create_dir_all(&p).map_err(|e| MixrtError::io(&p, e))?;
    }
    write_glb(&dir.join("mesh.glb"), &scene.mesh)?;
    let records = |split: &str, views: &[(Camera, Image)]| -> Result<Vec<CameraRecord>> {
        views
            .iter()
            .enumerate()
            .map(|(i, (cam, img))| {
                let rel = format!("{split}/{i:03}.png");
                write_image(&dir.join(&rel), img)?;
                Ok(CameraRecord::from_camera(cam, rel))
            })
            .collect()
    };
    let manifest = DatasetManifest {
        scene: opts.kind.name().to_string(),
        seed: opts.seed,
        view_offset: opts.view_offset,
        mesh: "mesh.glb".into(),
        background: [0.0; 3],
        train: records("train", &scene.train)?,
        test: records("test", &scene.test)?,
    };
    write_json(&dir.join(CAMERAS_FILE), &manifest)?;
    Ok(manifest)
}
