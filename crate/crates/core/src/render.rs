//! Pinhole cameras, the surface pipeline (intersect → calibrate → contract →
//! encode → decode), the volumetric reference renderer and PSNR.

use alloc::vec;
use alloc::vec::Vec;

use crate::displacement::DisplacementMaps;
use crate::error::{Error, Result};
use crate::fields::{composite, contract, FinalInterval, HashGridField, RaySample};
use crate::geometry::{BvhAccel, RayHit, TriMesh};
use crate::math::{log10, mat3_mul_vec, sigmoid, exp, tan, Mat3, Vec3};

/// Reported PSNR for identical images.
pub const PSNR_CAP: f64 = 99.0;

/// Pinhole camera looking down its local `-z` axis with `+y` up; image rows
/// grow downwards.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Camera {
    pub position: Vec3,
    /// World-from-camera rotation, row-major; columns are the camera axes.
    pub rotation: Mat3,
    pub focal: f64,
    pub principal: [f64; 2],
    pub width: u32,
    pub height: u32,
}

impl Camera {
    pub fn new(position: Vec3, rotation: Mat3, focal: f64, principal: [f64; 2], width: u32, height: u32) -> Result<Self> {
        let cam = Camera {
            position,
            rotation,
            focal,
            principal,
            width,
            height,
        };
        cam.validate()?;
        Ok(cam)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.focal > 0.0) || !self.focal.is_finite() {
            return Err(Error::config("focal length must be positive"));
        }
        if self.width == 0 || self.height == 0 {
            return Err(Error::config("image size must be positive"));
        }
        if !self.position.is_finite() {
            return Err(Error::NonFinite("camera position"));
        }
        let r = &self.rotation;
        for i in 0..3 {
            for j in 0..3 {
                let dot: f64 = (0..3).map(|k| r[i][k] * r[j][k]).sum();
                let want = if i == j { 1.0 } else { 0.0 };
                if !((dot - want).abs() <= 1e-6) {
                    return Err(Error::config("camera rotation is not orthonormal"));
                }
            }
        }
        Ok(())
    }

    /// Camera at `eye` looking at `target`, vertical field of view in
    /// radians, principal point at the image center.
    pub fn look_at(eye: Vec3, target: Vec3, up: Vec3, fov_y: f64, width: u32, height: u32) -> Result<Self> {
        let back = (eye - target)
            .normalized()
            .ok_or_else(|| Error::config("eye and target coincide"))?;
        let right = up
            .cross(back)
            .normalized()
            .ok_or_else(|| Error::config("up vector parallel to the view direction"))?;
        let true_up = back.cross(right);
        let rotation = [
            [right.x, true_up.x, back.x],
            [right.y, true_up.y, back.y],
            [right.z, true_up.z, back.z],
        ];
        let focal = 0.5 * height as f64 / tan(0.5 * fov_y);
        Camera::new(eye, rotation, focal, [0.5 * width as f64, 0.5 * height as f64], width, height)
    }

    /// Ray through continuous image position `(px, py)`.
    pub fn generate_ray(&self, px: f64, py: f64) -> Result<(Vec3, Vec3)> {
        if !(0.0..=self.width as f64).contains(&px) || !(0.0..=self.height as f64).contains(&py) {
            return Err(Error::PixelOutOfBounds {
                x: px,
                y: py,
                width: self.width,
                height: self.height,
            });
        }
        let local = Vec3::new(
            (px - self.principal[0]) / self.focal,
            -(py - self.principal[1]) / self.focal,
            -1.0,
        );
        let dir = mat3_mul_vec(&self.rotation, local)
            .normalized()
            .ok_or(Error::NonFinite("ray direction"))?;
        Ok((self.position, dir))
    }

    /// Ray through the center of pixel `(x, y)`.
    pub fn pixel_ray(&self, x: u32, y: u32) -> Result<(Vec3, Vec3)> {
        if x >= self.width || y >= self.height {
            return Err(Error::PixelOutOfBounds {
                x: x as f64,
                y: y as f64,
                width: self.width,
                height: self.height,
            });
        }
        self.generate_ray(x as f64 + 0.5, y as f64 + 0.5)
    }
}

/// Row-major RGB image with channels in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    width: u32,
    height: u32,
    pixels: Vec<[f64; 3]>,
}

impl Image {
    pub fn filled(width: u32, height: u32, rgb: [f64; 3]) -> Self {
        Image {
            width,
            height,
            pixels: vec![rgb; width as usize * height as usize],
        }
    }

    pub fn from_pixels(width: u32, height: u32, pixels: Vec<[f64; 3]>) -> Result<Self> {
        if pixels.len() != width as usize * height as usize {
            return Err(Error::DimensionMismatch {
                what: "image pixels",
                expected: width as usize * height as usize,
                got: pixels.len(),
            });
        }
        if pixels.iter().flatten().any(|c| !(0.0..=1.0).contains(c)) {
            return Err(Error::config("pixel channel outside [0, 1]"));
        }
        Ok(Image { width, height, pixels })
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn pixels(&self) -> &[[f64; 3]] {
        &self.pixels
    }

    pub fn get(&self, x: u32, y: u32) -> [f64; 3] {
        self.pixels[y as usize * self.width as usize + x as usize]
    }

    pub fn set(&mut self, x: u32, y: u32, rgb: [f64; 3]) {
        let w = self.width as usize;
        self.pixels[y as usize * w + x as usize] = rgb.map(|c| c.clamp(0.0, 1.0));
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RenderMode {
    #[default]
    Mixrt,
    VolumetricReference,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RenderSettings {
    pub background: [f64; 3],
    pub mode: RenderMode,
    /// Uniform samples per ray in volumetric mode.
    pub samples_per_ray: u32,
    pub near: f64,
    pub far: f64,
    /// Apply the displacement maps; `false` is the ablation.
    pub calibrate: bool,
}

impl Default for RenderSettings {
    fn default() -> Self {
        RenderSettings {
            background: [0.0; 3],
            mode: RenderMode::Mixrt,
            samples_per_ray: 128,
            near: 0.05,
            far: 4.0,
            calibrate: true,
        }
    }
}

impl RenderSettings {
    pub fn validate(&self) -> Result<()> {
        if self.background.iter().any(|c| !(0.0..=1.0).contains(c)) {
            return Err(Error::config("background outside [0, 1]"));
        }
        if self.mode == RenderMode::VolumetricReference {
            if !(self.near > 0.0 && self.near < self.far && self.far.is_finite()) {
                return Err(Error::config("volumetric rendering needs 0 < near < far"));
            }
            if self.samples_per_ray < 2 {
                return Err(Error::config("volumetric rendering needs at least 2 samples per ray"));
            }
        }
        Ok(())
    }
}

/// Mesh (with its acceleration structure), displacement maps and field.
#[derive(Debug, Clone)]
pub struct MixrtScene {
    mesh: TriMesh,
    bvh: Option<BvhAccel>,
    pub maps: DisplacementMaps,
    pub field: HashGridField,
}

impl MixrtScene {
    /// Builds the BVH; an empty mesh is allowed and renders as background.
    pub fn new(mesh: TriMesh, maps: DisplacementMaps, field: HashGridField) -> Result<Self> {
        if field.decoder.output_dim() < 3 {
            return Err(Error::config("decoder must output RGB"));
        }
        let bvh = if mesh.is_empty() {
            None
        } else {
            Some(BvhAccel::build(&mesh)?)
        };
        Ok(MixrtScene { mesh, bvh, maps, field })
    }

    pub fn mesh(&self) -> &TriMesh {
        &self.mesh
    }

    pub fn bvh(&self) -> Option<&BvhAccel> {
        self.bvh.as_ref()
    }

    pub fn intersect(&self, origin: Vec3, dir: Vec3) -> Result<Option<RayHit>> {
        match &self.bvh {
            Some(b) => b.intersect(&self.mesh, origin, dir),
            None => {
                crate::fields::check_unit(dir)?;
                Ok(None)
            }
        }
    }
}

/// Reusable per-thread buffers for shading.
#[derive(Debug, Default, Clone)]
pub struct ShadeScratch {
    embedding: Vec<f64>,
    mlp: [Vec<f64>; 2],
}

/// Color of a surface hit: calibrate (optional) → contract → encode → decode.
pub fn shade_hit(
    scene: &MixrtScene,
    hit: &RayHit,
    dir: Vec3,
    calibrate: bool,
    scratch: &mut ShadeScratch,
) -> Result<[f64; 3]> {
    let p = if calibrate {
        scene.maps.calibrate(hit.point, hit.uv, dir)?
    } else {
        hit.point
    };
    let q = contract(p)?;
    scratch.embedding.resize(scene.field.config().embedding_dim(), 0.0);
    scene.field.encode_into(q, &mut scratch.embedding)?;
    let out = scene.field.decoder.forward_with(&scratch.embedding, &mut scratch.mlp)?;
    Ok([sigmoid(out[0]), sigmoid(out[1]), sigmoid(out[2])])
}

/// Surface-pipeline color of one ray.
pub fn shade_ray(
    scene: &MixrtScene,
    settings: &RenderSettings,
    origin: Vec3,
    dir: Vec3,
    scratch: &mut ShadeScratch,
) -> Result<[f64; 3]> {
    match scene.intersect(origin, dir)? {
        None => Ok(settings.background),
        Some(hit) => shade_hit(scene, &hit, dir, settings.calibrate, scratch),
    }
}

/// Uniform sample positions `t_k` between near and far, inclusive.
pub fn volumetric_sample_ts(settings: &RenderSettings) -> Vec<f64> {
    let n = settings.samples_per_ray as usize;
    (0..n)
        .map(|k| settings.near + (settings.far - settings.near) * k as f64 / (n - 1) as f64)
        .collect()
}

/// Volume-rendered color of one ray through the field.
pub fn volumetric_ray(
    field: &HashGridField,
    settings: &RenderSettings,
    origin: Vec3,
    dir: Vec3,
    scratch: &mut ShadeScratch,
) -> Result<[f64; 3]> {
    if field.decoder.output_dim() < 4 {
        return Err(Error::DimensionMismatch {
            what: "decoder outputs (density requested)",
            expected: 4,
            got: field.decoder.output_dim(),
        });
    }
    scratch.embedding.resize(field.config().embedding_dim(), 0.0);
    let mut samples = Vec::with_capacity(settings.samples_per_ray as usize);
    for t in volumetric_sample_ts(settings) {
        let q = contract(origin + dir * t)?;
        field.encode_into(q, &mut scratch.embedding)?;
        let out = field.decoder.forward_with(&scratch.embedding, &mut scratch.mlp)?;
        samples.push(RaySample {
            t,
            sigma: exp(out[3]),
            rgb: [sigmoid(out[0]), sigmoid(out[1]), sigmoid(out[2])],
        });
    }
    Ok(composite(&samples, settings.background, FinalInterval::ReplicateLast)?.rgb)
}

/// Renders one image row `y` in the mode chosen by `settings`.
pub fn render_row(
    scene: &MixrtScene,
    camera: &Camera,
    settings: &RenderSettings,
    y: u32,
    scratch: &mut ShadeScratch,
) -> Result<Vec<[f64; 3]>> {
    (0..camera.width)
        .map(|x| {
            let (o, d) = camera.pixel_ray(x, y)?;
            let c = match settings.mode {
                RenderMode::Mixrt => shade_ray(scene, settings, o, d, scratch)?,
                RenderMode::VolumetricReference => volumetric_ray(&scene.field, settings, o, d, scratch)?,
            };
            Ok(c.map(|v| v.clamp(0.0, 1.0)))
        })
        .collect()
}

fn render_with(scene: &MixrtScene, camera: &Camera, settings: &RenderSettings) -> Result<Image> {
    settings.validate()?;
    camera.validate()?;
    let mut scratch = ShadeScratch::default();
    let mut pixels = Vec::with_capacity(camera.width as usize * camera.height as usize);
    for y in 0..camera.height {
        pixels.extend(render_row(scene, camera, settings, y, &mut scratch)?);
    }
    Image::from_pixels(camera.width, camera.height, pixels)
}

/// Single-threaded surface-pipeline render.
pub fn render_mixrt(scene: &MixrtScene, camera: &Camera, settings: &RenderSettings) -> Result<Image> {
    let settings = RenderSettings {
        mode: RenderMode::Mixrt,
        ..*settings
    };
    render_with(scene, camera, &settings)
}

/// Single-threaded volumetric render of the field alone.
pub fn render_volumetric_reference(
    field: &HashGridField,
    camera: &Camera,
    settings: &RenderSettings,
) -> Result<Image> {
    let settings = RenderSettings {
        mode: RenderMode::VolumetricReference,
        ..*settings
    };
    settings.validate()?;
    camera.validate()?;
    let mut scratch = ShadeScratch::default();
    let mut pixels = Vec::with_capacity(camera.width as usize * camera.height as usize);
    for y in 0..camera.height {
        for x in 0..camera.width {
            let (o, d) = camera.pixel_ray(x, y)?;
            pixels.push(volumetric_ray(field, &settings, o, d, &mut scratch)?.map(|v| v.clamp(0.0, 1.0)));
        }
    }
    Image::from_pixels(camera.width, camera.height, pixels)
}

/// Mean squared error over all channels.
pub fn mse(a: &Image, b: &Image) -> Result<f64> {
    if a.width != b.width || a.height != b.height {
        return Err(Error::DimensionMismatch {
            what: "image size",
            expected: a.pixels.len(),
            got: b.pixels.len(),
        });
    }
    let n = a.pixels.len() * 3;
    if n == 0 {
        return Ok(0.0);
    }
    let sum: f64 = a
        .pixels
        .iter()
        .zip(&b.pixels)
        .map(|(p, q)| (0..3).map(|c| (p[c] - q[c]) * (p[c] - q[c])).sum::<f64>())
        .sum();
    Ok(sum / n as f64)
}

/// `10 log10(1 / MSE)`, capped at [`PSNR_CAP`].
pub fn psnr(a: &Image, b: &Image) -> Result<f64> {
    let m = mse(a, b)?;
    if m <= 0.0 {
        return Ok(PSNR_CAP);
    }
    Ok((-10.0 * log10(m)).min(PSNR_CAP))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::{DecoderWeights, HashGridConfig};
    use crate::math::{sqrt, Vec2};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const IDENTITY: Mat3 = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];

    fn small_field(seed: u64) -> HashGridField {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let config = HashGridConfig {
            num_levels: 2,
            table_size: 1 << 12,
            feature_dim: 2,
            min_resolution: 8,
            max_resolution: 32,
        };
        let dec = DecoderWeights::init_uniform(4, &[8], 4, &mut rng).unwrap();
        let mut f = HashGridField::random(config, dec, &mut rng).unwrap();
        for v in f.tables_mut() {
            *v = rng.random_range(-1.0..1.0);
        }
        f
    }

    fn quad_scene(seed: u64) -> MixrtScene {
        // two triangles spanning z = -1, x,y in [-1, 1]
        let mesh = TriMesh::new(
            vec![
                Vec3::new(-1.0, -1.0, -1.0),
                Vec3::new(1.0, -1.0, -1.0),
                Vec3::new(1.0, 1.0, -1.0),
                Vec3::new(-1.0, 1.0, -1.0),
            ],
            vec![Vec2::new(0.0, 0.0), Vec2::new(1.0, 0.0), Vec2::new(1.0, 1.0), Vec2::new(0.0, 1.0)],
            vec![[0, 1, 2], [0, 2, 3]],
        )
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut maps = DisplacementMaps::zeros(4, 1).unwrap();
        for v in maps.sh_map_mut() {
            *v = rng.random_range(-1.0..1.0);
        }
        for v in maps.scale_map_mut() {
            *v = rng.random_range(-0.05..0.05);
        }
        MixrtScene::new(mesh, maps, small_field(seed)).unwrap()
    }

    fn camera(w: u32, h: u32) -> Camera {
        Camera::new(Vec3::ZERO, IDENTITY, 8.0, [w as f64 / 2.0, h as f64 / 2.0], w, h).unwrap()
    }

    #[test]
    fn principal_pixel_looks_down_minus_z() {
        let cam = Camera::new(Vec3::new(1.0, 2.0, 3.0), IDENTITY, 10.0, [4.5, 3.5], 20, 7).unwrap();
        let (o, d) = cam.pixel_ray(4, 3).unwrap();
        assert_eq!(o, Vec3::new(1.0, 2.0, 3.0));
        assert!((d - Vec3::new(0.0, 0.0, -1.0)).norm() < 1e-15);
        let (_, d) = cam.generate_ray(4.5 + 10.0, 3.5).unwrap();
        let want = Vec3::new(1.0, 0.0, -1.0) / sqrt(2.0);
        assert!((d - want).norm() < 1e-15);
    }

    #[test]
    fn ray_directions_are_unit() {
        let cam = camera(16, 16);
        for y in 0..16 {
            for x in 0..16 {
                let (_, d) = cam.pixel_ray(x, y).unwrap();
                assert!((d.norm() - 1.0).abs() < 1e-12);
            }
        }
        assert!(matches!(cam.pixel_ray(16, 0), Err(Error::PixelOutOfBounds { .. })));
    }

    #[test]
    fn rejects_bad_rotation() {
        let bad = [[1.0, 0.0, 0.0], [0.0, 2.0, 0.0], [0.0, 0.0, 1.0]];
        assert!(Camera::new(Vec3::ZERO, bad, 1.0, [0.0, 0.0], 1, 1).is_err());
    }

    #[test]
    fn look_at_points_at_target() {
        let cam = Camera::look_at(Vec3::new(1.0, 1.0, 1.0), Vec3::ZERO, Vec3::new(0.0, 0.0, 1.0), 1.0, 8, 8).unwrap();
        let (_, d) = cam.generate_ray(4.0, 4.0).unwrap();
        assert!((d + Vec3::new(1.0, 1.0, 1.0) / sqrt(3.0)).norm() < 1e-12);
    }

    #[test]
    fn empty_mesh_renders_background() {
        let s = quad_scene(1);
        let empty = MixrtScene::new(TriMesh::empty(), s.maps.clone(), s.field.clone()).unwrap();
        let settings = RenderSettings {
            background: [0.2, 0.4, 0.6],
            ..Default::default()
        };
        let img = render_mixrt(&empty, &camera(8, 8), &settings).unwrap();
        assert!(img.pixels().iter().all(|p| *p == [0.2, 0.4, 0.6]));
    }

    #[test]
    fn zero_scale_equals_disabled_calibration() {
        let mut s = quad_scene(2);
        s.maps.scale_map_mut().fill(0.0);
        let on = render_mixrt(&s, &camera(12, 12), &RenderSettings::default()).unwrap();
        let off = render_mixrt(
            &s,
            &camera(12, 12),
            &RenderSettings {
                calibrate: false,
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(on, off);
    }

    #[test]
    fn pixel_equals_hand_chained_stages() {
        let s = quad_scene(3);
        let cam = camera(10, 10);
        let img = render_mixrt(&s, &cam, &RenderSettings::default()).unwrap();
        let (o, d) = cam.pixel_ray(3, 6).unwrap();
        let hit = s.bvh().unwrap().intersect(s.mesh(), o, d).unwrap().unwrap();
        let p = s.maps.calibrate(hit.point, hit.uv, d).unwrap();
        let q = contract(p).unwrap();
        let e = s.field.encode(q).unwrap();
        let c = crate::fields::decode(&s.field.decoder, &e, false).unwrap();
        assert_eq!(img.get(3, 6), c.rgb);
    }

    #[test]
    fn camera_facing_away_sees_background() {
        let s = quad_scene(4);
        let back = [[1.0, 0.0, 0.0], [0.0, -1.0, 0.0], [0.0, 0.0, -1.0]];
        let cam = Camera::new(Vec3::ZERO, back, 8.0, [4.0, 4.0], 8, 8).unwrap();
        let settings = RenderSettings {
            background: [0.1, 0.1, 0.1],
            ..Default::default()
        };
        let img = render_mixrt(&s, &cam, &settings).unwrap();
        assert!(img.pixels().iter().all(|p| *p == [0.1, 0.1, 0.1]));
    }

    #[test]
    fn render_is_deterministic() {
        let s = quad_scene(5);
        let a = render_mixrt(&s, &camera(9, 9), &RenderSettings::default()).unwrap();
        let b = render_mixrt(&s, &camera(9, 9), &RenderSettings::default()).unwrap();
        assert_eq!(a, b);
    }

    fn volumetric_settings() -> RenderSettings {
        RenderSettings {
            background: [0.0, 0.0, 1.0],
            samples_per_ray: 64,
            near: 0.1,
            far: 3.0,
            ..Default::default()
        }
    }

    #[test]
    fn transparent_field_renders_background() {
        let mut f = small_field(6);
        f.decoder.layers_mut().last_mut().unwrap().bias[3] = -1e3;
        let img = render_volumetric_reference(&f, &camera(6, 6), &volumetric_settings()).unwrap();
        assert!(img.pixels().iter().all(|p| p.iter().zip([0.0, 0.0, 1.0]).all(|(a, b)| (a - b).abs() < 1e-12)));
    }

    #[test]
    fn dense_constant_field_renders_its_color() {
        let mut f = small_field(7);
        f.decoder.fill(0.0);
        let last = f.decoder.layers_mut().last_mut().unwrap();
        last.bias.copy_from_slice(&[2.0, -1.0, 0.0, 8.0]);
        let want = [sigmoid(2.0), sigmoid(-1.0), 0.5];
        let img = render_volumetric_reference(&f, &camera(6, 6), &volumetric_settings()).unwrap();
        for p in img.pixels() {
            for c in 0..3 {
                assert!((p[c] - want[c]).abs() < 1e-3);
            }
        }
    }

    #[test]
    fn volumetric_pixel_matches_direct_sum() {
        let f = small_field(8);
        let settings = volumetric_settings();
        let cam = camera(6, 6);
        let img = render_volumetric_reference(&f, &cam, &settings).unwrap();
        let (o, d) = cam.pixel_ray(2, 4).unwrap();
        // direct evaluation of sum_k T_k (1 - exp(-sigma_k delta_k)) c_k
        let ts = volumetric_sample_ts(&settings);
        let n = ts.len();
        let mut acc = [0.0; 3];
        let mut optical = 0.0;
        for k in 0..n {
            let delta = if k + 1 < n { ts[k + 1] - ts[k] } else { ts[n - 1] - ts[n - 2] };
            let e = f.encode(contract(o + d * ts[k]).unwrap()).unwrap();
            let out = crate::fields::decode(&f.decoder, &e, true).unwrap();
            let sigma = out.sigma.unwrap();
            let w = exp(-optical) * (1.0 - exp(-sigma * delta));
            for c in 0..3 {
                acc[c] += w * out.rgb[c];
            }
            optical += sigma * delta;
        }
        for c in 0..3 {
            acc[c] += exp(-optical) * settings.background[c];
            assert!((img.get(2, 4)[c] - acc[c]).abs() < 1e-12);
        }
    }

    #[test]
    fn volumetric_settings_validated() {
        let f = small_field(9);
        let bad = RenderSettings {
            near: 2.0,
            far: 1.0,
            ..volumetric_settings()
        };
        assert!(render_volumetric_reference(&f, &camera(2, 2), &bad).is_err());
    }

    /// Single dense level whose density steps from empty to solid across
    /// the grid plane through world z = -0.5 and whose color is linear in x.
    fn density_step_field() -> HashGridField {
        let config = HashGridConfig {
            num_levels: 1,
            table_size: 1 << 16,
            feature_dim: 2,
            min_resolution: 32,
            max_resolution: 32,
        };
        let mut dec = DecoderWeights::zeros(2, &[], 4).unwrap();
        {
            let l = &mut dec.layers_mut()[0];
            l.weights[0] = 2.0; // red <- feature 0
            l.weights[2 * 3 + 1] = 1.0; // density <- feature 1
            l.bias.copy_from_slice(&[0.0, 0.3, -0.4, 0.0]);
        }
        let mut f = HashGridField::zeros(config, dec).unwrap();
        assert!(f.is_dense(0));
        // world z = -0.5 -> grid z = 0.375 = 12/32
        for k in 0..=32u32 {
            for j in 0..=32u32 {
                for i in 0..=32u32 {
                    let e = f.vertex_entry(0, [i, j, k]);
                    let t = f.table_mut(0);
                    t[2 * e] = i as f64 / 32.0 - 0.5;
                    t[2 * e + 1] = if k <= 12 { 12.0 } else { -30.0 };
                }
            }
        }
        f
    }

    #[test]
    fn volumetric_and_surface_agree_on_opaque_proxy() {
        let field = density_step_field();
        let plane = TriMesh::new(
            vec![
                Vec3::new(-0.9, -0.9, -0.5),
                Vec3::new(0.9, -0.9, -0.5),
                Vec3::new(0.9, 0.9, -0.5),
                Vec3::new(-0.9, 0.9, -0.5),
            ],
            vec![Vec2::new(0.0, 0.0), Vec2::new(1.0, 0.0), Vec2::new(1.0, 1.0), Vec2::new(0.0, 1.0)],
            vec![[0, 1, 2], [0, 2, 3]],
        )
        .unwrap();
        let scene = MixrtScene::new(plane, DisplacementMaps::zeros(2, 0).unwrap(), field).unwrap();
        let cam = Camera::look_at(Vec3::new(0.1, -0.2, 0.3), Vec3::new(0.0, 0.0, -0.5), Vec3::new(0.0, 1.0, 0.0), 1.2, 24, 24)
            .unwrap();
        let settings = RenderSettings {
            background: [0.0, 0.0, 1.0],
            samples_per_ray: 512,
            near: 0.05,
            far: 2.5,
            ..Default::default()
        };
        let surf = render_mixrt(&scene, &cam, &settings).unwrap();
        let vol = render_volumetric_reference(&scene.field, &cam, &settings).unwrap();
        let agree = surf
            .pixels()
            .iter()
            .zip(vol.pixels())
            .filter(|(a, b)| (0..3).all(|c| (a[c] - b[c]).abs() <= 2.0 / 255.0))
            .count();
        assert!(agree as f64 >= 0.95 * surf.pixels().len() as f64, "{agree} of {}", surf.pixels().len());
    }

    #[test]
    fn psnr_examples() {
        let a = Image::filled(4, 4, [0.3, 0.3, 0.3]);
        assert_eq!(psnr(&a, &a).unwrap(), PSNR_CAP);
        let b = Image::filled(4, 4, [0.4, 0.4, 0.4]);
        assert!((psnr(&a, &b).unwrap() - 20.0).abs() < 1e-9);
        assert!((psnr(&b, &a).unwrap() - psnr(&a, &b).unwrap()).abs() < 1e-15);
        let black = Image::filled(2, 2, [0.0; 3]);
        let white = Image::filled(2, 2, [1.0; 3]);
        assert_eq!(psnr(&black, &white).unwrap(), 0.0);
        assert!(psnr(&black, &a).is_err());
    }
}
