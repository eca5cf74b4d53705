//! Joint optimization of hash tables, decoder and displacement maps against
//! posed images, with hand-written reverse-mode gradients.

use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::displacement::MAX_BASIS;
use crate::error::{Error, Result};
use crate::fields::{contract, contract_jacobian, DecoderWeights};
use crate::geometry::RayHit;
use crate::math::{mat3_transpose_mul_vec, powf, sigmoid, sqrt, Vec3};
use crate::render::{Camera, Image, MixrtScene};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub iterations: usize,
    /// Rays per step.
    pub batch_size: usize,
    pub lr_tables: f64,
    pub lr_decoder: f64,
    pub lr_sh_map: f64,
    pub lr_scale_map: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Learning-rate multiplier reached at the last iteration (exponential
    /// schedule); `1.0` keeps rates constant.
    pub final_lr_factor: f64,
    pub seed: u64,
    /// Interval, in iterations, of the logged loss history.
    pub log_every: usize,
    /// Optimize and apply the displacement maps. Off trains the ablated
    /// model whose hits go straight to the field.
    pub calibrate: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            iterations: 2000,
            batch_size: 4096,
            lr_tables: 1e-2,
            lr_decoder: 1e-3,
            lr_sh_map: 1e-3,
            lr_scale_map: 1e-3,
            beta1: 0.9,
            beta2: 0.99,
            eps: 1e-15,
            final_lr_factor: 1.0,
            seed: 0,
            log_every: 100,
            calibrate: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let lrs = [self.lr_tables, self.lr_decoder, self.lr_sh_map, self.lr_scale_map];
        if lrs.iter().any(|lr| !(*lr > 0.0) || !lr.is_finite()) {
            return Err(Error::config("learning rates must be positive"));
        }
        if self.batch_size == 0 {
            return Err(Error::config("batch size must be at least 1"));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::config("moment coefficients must lie in [0, 1)"));
        }
        if !(self.eps > 0.0) {
            return Err(Error::config("eps must be positive"));
        }
        if !(self.final_lr_factor > 0.0 && self.final_lr_factor <= 1.0) {
            return Err(Error::config("final_lr_factor must lie in (0, 1]"));
        }
        if self.log_every == 0 {
            return Err(Error::config("log_every must be at least 1"));
        }
        Ok(())
    }

    fn lr_scale(&self, iteration: usize) -> f64 {
        if self.iterations <= 1 {
            return 1.0;
        }
        powf(self.final_lr_factor, iteration as f64 / (self.iterations - 1) as f64)
    }
}

/// Mean squared error over all channels of all rays.
pub fn loss(predicted: &[[f64; 3]], target: &[[f64; 3]]) -> Result<f64> {
    if predicted.len() != target.len() {
        return Err(Error::DimensionMismatch {
            what: "loss inputs",
            expected: predicted.len(),
            got: target.len(),
        });
    }
    if predicted.is_empty() {
        return Ok(0.0);
    }
    let sum: f64 = predicted
        .iter()
        .zip(target)
        .map(|(p, t)| (0..3).map(|c| (p[c] - t[c]) * (p[c] - t[c])).sum::<f64>())
        .sum();
    Ok(sum / (3 * predicted.len()) as f64)
}

/// A supervised ray with its precomputed mesh hit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainRay {
    pub origin: Vec3,
    pub dir: Vec3,
    pub target: [f64; 3],
    pub hit: RayHit,
}

/// Casts every pixel of every view against the (frozen) mesh once; rays
/// that miss are dropped.
pub fn build_training_rays(scene: &MixrtScene, dataset: &[(Camera, Image)]) -> Result<Vec<TrainRay>> {
    if dataset.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut rays = Vec::new();
    for (cam, img) in dataset {
        if cam.width != img.width() || cam.height != img.height() {
            return Err(Error::DimensionMismatch {
                what: "view image size",
                expected: cam.width as usize * cam.height as usize,
                got: img.pixels().len(),
            });
        }
        for y in 0..cam.height {
            for x in 0..cam.width {
                let (origin, dir) = cam.pixel_ray(x, y)?;
                if let Some(hit) = scene.intersect(origin, dir)? {
                    rays.push(TrainRay {
                        origin,
                        dir,
                        target: img.get(x, y),
                        hit,
                    });
                }
            }
        }
    }
    Ok(rays)
}

/// Gradients with the shapes of the trainable parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    /// Same layout as [`HashGridField::tables`](crate::fields::HashGridField::tables); entries outside every
    /// ray's stencil are exactly zero.
    pub tables: Vec<f64>,
    pub decoder: DecoderWeights,
    pub sh_map: Vec<f64>,
    pub scale_map: Vec<f64>,
}

impl Gradients {
    pub fn zeros_for(scene: &MixrtScene) -> Self {
        Gradients {
            tables: vec![0.0; scene.field.tables().len()],
            decoder: scene.field.decoder.zeros_like(),
            sh_map: vec![0.0; scene.maps.sh_map().len()],
            scale_map: vec![0.0; scene.maps.scale_map().len()],
        }
    }

    pub fn clear(&mut self) {
        self.tables.fill(0.0);
        self.decoder.fill(0.0);
        self.sh_map.fill(0.0);
        self.scale_map.fill(0.0);
    }
}

/// Predicted color of one ray from its cached hit.
pub fn predict(scene: &MixrtScene, ray: &TrainRay, calibrate: bool) -> Result<[f64; 3]> {
    let p = if calibrate {
        scene.maps.calibrate(ray.hit.point, ray.hit.uv, ray.dir)?
    } else {
        ray.hit.point
    };
    let e = scene.field.encode(contract(p)?)?;
    let out = scene.field.decoder.forward(&e)?;
    Ok([sigmoid(out[0]), sigmoid(out[1]), sigmoid(out[2])])
}

/// Batch loss and its gradient with respect to every parameter group.
pub fn backward(scene: &MixrtScene, rays: &[TrainRay], calibrate: bool) -> Result<(f64, Gradients)> {
    let mut grads = Gradients::zeros_for(scene);
    let l = backward_into(scene, rays, calibrate, &mut grads)?;
    Ok((l, grads))
}

/// Like [`backward`] but accumulates into `grads`, which must be zeroed by
/// the caller.
pub fn backward_into(scene: &MixrtScene, rays: &[TrainRay], calibrate: bool, grads: &mut Gradients) -> Result<f64> {
    if rays.is_empty() {
        return Ok(0.0);
    }
    let field = &scene.field;
    let maps = &scene.maps;
    let cfg = field.config();
    let feat = cfg.feature_dim as usize;
    let level_len = cfg.table_size as usize * feat;
    let b = maps.basis().basis_count();
    let ch = maps.sh_channels();
    let norm = 1.0 / (3 * rays.len()) as f64;
    let mut emb = vec![0.0; cfg.embedding_dim()];
    let mut basis_values = [0.0; MAX_BASIS];
    let mut total = 0.0;

    for ray in rays {
        scene.mesh().check_hit(&ray.hit)?;
        // forward
        let p = ray.hit.point;
        let taps = maps.taps(ray.hit.uv);
        let mut offset = Vec3::ZERO;
        let mut scale = 0.0;
        if calibrate {
            crate::fields::check_unit(ray.dir)?;
            maps.basis().eval_into(ray.dir, &mut basis_values[..b]);
            for &(texel, w) in &taps {
                let coeffs = &maps.sh_map()[texel * ch..(texel + 1) * ch];
                for axis in 0..3 {
                    let dot: f64 = coeffs[axis * b..(axis + 1) * b]
                        .iter()
                        .zip(&basis_values[..b])
                        .map(|(c, y)| c * y)
                        .sum();
                    offset[axis] += w * dot;
                }
                scale += w * maps.scale_map()[texel];
            }
        }
        let p_cali = p + offset * scale;
        let q = contract(p_cali)?;
        let stencils = field.encode_traced(q, &mut emb)?;
        let trace = field.decoder.forward_traced(&emb)?;
        let out = trace.outputs();

        // loss and its derivative at the decoder outputs
        let mut d_out = vec![0.0; out.len()];
        for c in 0..3 {
            let pred = sigmoid(out[c]);
            let diff = pred - ray.target[c];
            total += diff * diff;
            d_out[c] = 2.0 * diff * norm * pred * (1.0 - pred);
        }
        let d_emb = field.decoder.backward(&trace, &d_out, &mut grads.decoder);

        // tables and grid position
        let mut d_g = Vec3::ZERO;
        for (level, st) in stencils.iter().enumerate() {
            let table = field.table(level);
            let de = &d_emb[level * feat..(level + 1) * feat];
            let gt = &mut grads.tables[level * level_len..(level + 1) * level_len];
            for corner in 0..8 {
                let base = st.entries[corner] * feat;
                let w = st.weights[corner];
                let mut dot = 0.0;
                for f in 0..feat {
                    gt[base + f] += w * de[f];
                    dot += table[base + f] * de[f];
                }
                let wg = st.weight_grads[corner];
                d_g += Vec3::new(wg[0], wg[1], wg[2]) * dot;
            }
        }
        if !calibrate {
            continue;
        }
        // g = (q + 2) / 4, q = contract(p_cali)
        let d_q = d_g * 0.25;
        let d_p = mat3_transpose_mul_vec(&contract_jacobian(p_cali), d_q);
        // p_cali = p + offset * scale
        let d_scale = d_p.dot(offset);
        let d_offset = d_p * scale;
        for &(texel, w) in &taps {
            if w == 0.0 {
                continue;
            }
            grads.scale_map[texel] += w * d_scale;
            let gsh = &mut grads.sh_map[texel * ch..(texel + 1) * ch];
            for axis in 0..3 {
                let k = w * d_offset[axis];
                for (g, y) in gsh[axis * b..(axis + 1) * b].iter_mut().zip(&basis_values[..b]) {
                    *g += k * y;
                }
            }
        }
    }
    Ok(total * norm)
}

/// First and second moments of one parameter group.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct AdamSlot {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
}

impl AdamSlot {
    pub fn new(len: usize) -> Self {
        AdamSlot {
            m: vec![0.0; len],
            v: vec![0.0; len],
        }
    }

    /// One bias-corrected update at 1-based step `t`.
    pub fn step(&mut self, params: &mut [f64], grads: &[f64], lr: f64, t: u64, config: &TrainConfig) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(Error::DimensionMismatch {
                what: "optimizer slot",
                expected: self.m.len(),
                got: if params.len() != self.m.len() { params.len() } else { grads.len() },
            });
        }
        let (b1, b2) = (config.beta1, config.beta2);
        let c1 = 1.0 - powf(b1, t as f64);
        let c2 = 1.0 - powf(b2, t as f64);
        for i in 0..params.len() {
            let g = grads[i];
            let m = b1 * self.m[i] + (1.0 - b1) * g;
            let v = b2 * self.v[i] + (1.0 - b2) * g * g;
            self.m[i] = m;
            self.v[i] = v;
            if m != 0.0 {
                params[i] -= lr * (m / c1) / (sqrt(v / c2) + config.eps);
            }
        }
        Ok(())
    }
}

/// Adaptive-moment optimizer with one slot per parameter array.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    step: u64,
    tables: AdamSlot,
    decoder: Vec<(AdamSlot, AdamSlot)>,
    sh_map: AdamSlot,
    scale_map: AdamSlot,
}

impl Adam {
    pub fn new(scene: &MixrtScene) -> Self {
        Adam {
            step: 0,
            tables: AdamSlot::new(scene.field.tables().len()),
            decoder: scene
                .field
                .decoder
                .layers()
                .iter()
                .map(|l| (AdamSlot::new(l.weights.len()), AdamSlot::new(l.bias.len())))
                .collect(),
            sh_map: AdamSlot::new(scene.maps.sh_map().len()),
            scale_map: AdamSlot::new(scene.maps.scale_map().len()),
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    pub fn tables_slot(&self) -> &AdamSlot {
        &self.tables
    }

    /// Applies one update; `lr_scale` multiplies every group's rate.
    pub fn step(
        &mut self,
        scene: &mut MixrtScene,
        grads: &Gradients,
        config: &TrainConfig,
        lr_scale: f64,
    ) -> Result<()> {
        if grads.decoder.layers().len() != self.decoder.len() {
            return Err(Error::DimensionMismatch {
                what: "decoder gradient layers",
                expected: self.decoder.len(),
                got: grads.decoder.layers().len(),
            });
        }
        self.step += 1;
        let t = self.step;
        self.tables
            .step(scene.field.tables_mut(), &grads.tables, config.lr_tables * lr_scale, t, config)?;
        for ((ws, bs), (layer, gl)) in self
            .decoder
            .iter_mut()
            .zip(scene.field.decoder.layers_mut().iter_mut().zip(grads.decoder.layers()))
        {
            ws.step(&mut layer.weights, &gl.weights, config.lr_decoder * lr_scale, t, config)?;
            bs.step(&mut layer.bias, &gl.bias, config.lr_decoder * lr_scale, t, config)?;
        }
        if config.calibrate {
            self.sh_map
                .step(scene.maps.sh_map_mut(), &grads.sh_map, config.lr_sh_map * lr_scale, t, config)?;
            self.scale_map
                .step(scene.maps.scale_map_mut(), &grads.scale_map, config.lr_scale_map * lr_scale, t, config)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainReport {
    /// Batch loss of every iteration.
    pub losses: Vec<f64>,
    /// `(iteration, mean batch loss over the interval)` every `log_every`
    /// iterations and at the end.
    pub logged: Vec<(usize, f64)>,
}

/// Trains `scene` in place on posed views. The mesh is never modified.
pub fn train(scene: &mut MixrtScene, dataset: &[(Camera, Image)], config: &TrainConfig) -> Result<TrainReport> {
    config.validate()?;
    let rays = build_training_rays(scene, dataset)?;
    train_rays(scene, &rays, config, |_, _| {})
}

/// Trains on precomputed rays, calling `on_log(iteration, loss)` at each
/// logging interval.
pub fn train_rays<F: FnMut(usize, f64)>(
    scene: &mut MixrtScene,
    rays: &[TrainRay],
    config: &TrainConfig,
    mut on_log: F,
) -> Result<TrainReport> {
    config.validate()?;
    if rays.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut report = TrainReport::default();
    if config.iterations == 0 {
        return Ok(report);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut adam = Adam::new(scene);
    let mut grads = Gradients::zeros_for(scene);
    let mut batch = Vec::with_capacity(config.batch_size);
    let mut window = 0.0;
    let mut window_len = 0usize;
    for it in 0..config.iterations {
        batch.clear();
        for _ in 0..config.batch_size {
            batch.push(rays[rng.random_range(0..rays.len())]);
        }
        grads.clear();
        let l = backward_into(scene, &batch, config.calibrate, &mut grads)?;
        if !l.is_finite() {
            return Err(Error::NonFiniteLoss { iteration: it, loss: l });
        }
        adam.step(scene, &grads, config, config.lr_scale(it))?;
        report.losses.push(l);
        window += l;
        window_len += 1;
        if (it + 1) % config.log_every == 0 || it + 1 == config.iterations {
            let mean = window / window_len as f64;
            report.logged.push((it + 1, mean));
            on_log(it + 1, mean);
            window = 0.0;
            window_len = 0;
        }
    }
    if scene.field.tables().iter().any(|v| !v.is_finite())
        || scene.maps.sh_map().iter().any(|v| !v.is_finite())
        || scene.maps.scale_map().iter().any(|v| !v.is_finite())
    {
        return Err(Error::NonFinite("trained parameters"));
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::displacement::DisplacementMaps;
    use crate::fields::{HashGridConfig, HashGridField};
    use crate::geometry::TriMesh;
    use crate::math::{Mat3, Vec2};
    use crate::render::{render_mixrt, RenderSettings};

    fn quad_mesh() -> TriMesh {
        TriMesh::new(
            vec![
                Vec3::new(-0.8, -0.8, -0.6),
                Vec3::new(0.8, -0.8, -0.6),
                Vec3::new(0.8, 0.8, -0.3),
                Vec3::new(-0.8, 0.8, -0.3),
            ],
            vec![Vec2::new(0.0, 0.0), Vec2::new(1.0, 0.0), Vec2::new(1.0, 1.0), Vec2::new(0.0, 1.0)],
            vec![[0, 1, 2], [0, 2, 3]],
        )
        .unwrap()
    }

    fn scene(seed: u64) -> MixrtScene {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let config = HashGridConfig {
            num_levels: 3,
            table_size: 1 << 10,
            feature_dim: 2,
            min_resolution: 4,
            max_resolution: 64,
        };
        let dec = DecoderWeights::init_uniform(6, &[8, 8], 4, &mut rng).unwrap();
        let mut field = HashGridField::random(config, dec, &mut rng).unwrap();
        for v in field.tables_mut() {
            *v = rng.random_range(-1.0..1.0);
        }
        for l in field.decoder.layers_mut() {
            for b in &mut l.bias {
                *b = rng.random_range(-0.2..0.2);
            }
        }
        let mut maps = DisplacementMaps::zeros(6, 2).unwrap();
        for v in maps.sh_map_mut() {
            *v = rng.random_range(-1.0..1.0);
        }
        for v in maps.scale_map_mut() {
            *v = rng.random_range(-0.05..0.05);
        }
        MixrtScene::new(quad_mesh(), maps, field).unwrap()
    }

    const IDENTITY: Mat3 = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];

    fn rays(scene: &MixrtScene, n: usize, seed: u64) -> Vec<TrainRay> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut out = Vec::new();
        while out.len() < n {
            let origin = Vec3::new(rng.random_range(-0.3..0.3), rng.random_range(-0.3..0.3), 0.2);
            let dir = Vec3::new(rng.random_range(-0.4..0.4), rng.random_range(-0.4..0.4), -1.0)
                .normalized()
                .unwrap();
            if let Some(hit) = scene.intersect(origin, dir).unwrap() {
                out.push(TrainRay {
                    origin,
                    dir,
                    target: [rng.random(), rng.random(), rng.random()],
                    hit,
                });
            }
        }
        out
    }

    fn batch_loss(scene: &MixrtScene, rays: &[TrainRay]) -> f64 {
        let pred: Vec<_> = rays.iter().map(|r| predict(scene, r, true).unwrap()).collect();
        let tgt: Vec<_> = rays.iter().map(|r| r.target).collect();
        loss(&pred, &tgt).unwrap()
    }

    #[test]
    fn loss_examples() {
        let a = [[0.1, 0.2, 0.3], [0.5, 0.5, 0.5]];
        assert_eq!(loss(&a, &a).unwrap(), 0.0);
        let l = loss(&[[0.5, 0.0, 0.0]], &[[0.0, 0.0, 0.0]]).unwrap();
        assert!((l - 0.25 / 3.0).abs() < 1e-15);
        let b = [[0.0, 0.7, 0.3], [0.9, 0.5, 0.1]];
        assert_eq!(loss(&a, &b).unwrap(), loss(&b, &a).unwrap());
        assert!(loss(&a, &b[..1]).is_err());
    }

    #[test]
    fn backward_loss_matches_forward() {
        let s = scene(1);
        let r = rays(&s, 16, 2);
        let (l, _) = backward(&s, &r, true).unwrap();
        assert!((l - batch_loss(&s, &r)).abs() < 1e-14);
    }

    /// Compares analytic partials against central differences for
    /// `count` coordinates of one parameter group.
    fn check_group(
        s: &MixrtScene,
        r: &[TrainRay],
        analytic: &[f64],
        coords: &[usize],
        poke: impl Fn(&mut MixrtScene, usize, f64),
    ) -> f64 {
        let eps = 1e-4;
        let mut worst: f64 = 0.0;
        for &i in coords {
            let mut plus = s.clone();
            poke(&mut plus, i, eps);
            let mut minus = s.clone();
            poke(&mut minus, i, -eps);
            let fd = (batch_loss(&plus, r) - batch_loss(&minus, r)) / (2.0 * eps);
            let a = analytic[i];
            let rel = (a - fd).abs() / a.abs().max(fd.abs()).max(1e-8);
            worst = worst.max(rel);
        }
        worst
    }

    fn pick(rng: &mut ChaCha8Rng, candidates: &[usize], n: usize) -> Vec<usize> {
        (0..n).map(|_| candidates[rng.random_range(0..candidates.len())]).collect()
    }

    #[test]
    fn gradients_match_finite_differences() {
        let s = scene(3);
        let r = rays(&s, 24, 4);
        let (_, g) = backward(&s, &r, true).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let nz = |v: &[f64]| -> Vec<usize> { (0..v.len()).filter(|&i| v[i] != 0.0).collect() };

        let t = pick(&mut rng, &nz(&g.tables), 200);
        let e = check_group(&s, &r, &g.tables, &t, |sc, i, d| sc.field.tables_mut()[i] += d);
        assert!(e < 1e-4, "tables {e}");

        let flat_dec = |w: &DecoderWeights| -> Vec<f64> {
            w.layers().iter().flat_map(|l| l.weights.iter().chain(&l.bias).copied()).collect()
        };
        let gd = flat_dec(&g.decoder);
        let all: Vec<usize> = (0..gd.len()).collect();
        let t = pick(&mut rng, &all, 200);
        let e = check_group(&s, &r, &gd, &t, |sc, mut i, d| {
            for l in sc.field.decoder.layers_mut() {
                if i < l.weights.len() {
                    l.weights[i] += d;
                    return;
                }
                i -= l.weights.len();
                if i < l.bias.len() {
                    l.bias[i] += d;
                    return;
                }
                i -= l.bias.len();
            }
        });
        assert!(e < 1e-4, "decoder {e}");

        let t = pick(&mut rng, &nz(&g.sh_map), 200);
        let e = check_group(&s, &r, &g.sh_map, &t, |sc, i, d| sc.maps.sh_map_mut()[i] += d);
        assert!(e < 1e-4, "sh map {e}");

        let t = pick(&mut rng, &nz(&g.scale_map), 200);
        let e = check_group(&s, &r, &g.scale_map, &t, |sc, i, d| sc.maps.scale_map_mut()[i] += d);
        assert!(e < 1e-4, "scale map {e}");
    }

    #[test]
    fn untouched_entries_get_zero_gradient() {
        let s = scene(6);
        let r = rays(&s, 4, 7);
        let (_, g) = backward(&s, &r, true).unwrap();
        let f = s.field.config().feature_dim as usize;
        let level_len = s.field.config().table_size as usize * f;
        let mut touched = vec![false; g.tables.len()];
        for ray in &r {
            let p = s.maps.calibrate(ray.hit.point, ray.hit.uv, ray.dir).unwrap();
            let mut emb = vec![0.0; s.field.config().embedding_dim()];
            let st = s.field.encode_traced(contract(p).unwrap(), &mut emb).unwrap();
            for (l, st) in st.iter().enumerate() {
                for e in st.entries {
                    for k in 0..f {
                        touched[l * level_len + e * f + k] = true;
                    }
                }
            }
        }
        assert!(touched.iter().any(|t| !t));
        for (i, v) in g.tables.iter().enumerate() {
            if !touched[i] {
                assert_eq!(*v, 0.0);
            }
        }
    }

    #[test]
    fn zero_scale_and_perfect_fit_give_zero_gradients() {
        let mut s = scene(8);
        s.maps.scale_map_mut().fill(0.0);
        let mut r = rays(&s, 8, 9);
        for ray in &mut r {
            ray.target = predict(&s, ray, true).unwrap();
        }
        let (l, g) = backward(&s, &r, true).unwrap();
        assert_eq!(l, 0.0);
        assert!(g.tables.iter().all(|v| *v == 0.0));
        assert!(g.sh_map.iter().all(|v| *v == 0.0));
        assert!(g.scale_map.iter().all(|v| *v == 0.0));
        assert!(g.decoder.layers().iter().all(|l| l.weights.iter().chain(&l.bias).all(|v| *v == 0.0)));
    }

    #[test]
    fn inconsistent_hit_rejected() {
        let s = scene(10);
        let mut r = rays(&s, 1, 11);
        r[0].hit.face = 7;
        assert!(matches!(backward(&s, &r, true), Err(Error::InconsistentHit(_))));
    }

    #[test]
    fn adam_zero_gradient_keeps_parameters() {
        let cfg = TrainConfig::default();
        let mut slot = AdamSlot::new(3);
        let mut p = [1.0, -2.0, 3.0];
        slot.step(&mut p, &[0.0; 3], 0.1, 1, &cfg).unwrap();
        assert_eq!(p, [1.0, -2.0, 3.0]);
        assert_eq!(slot.m, [0.0; 3]);
        // moments decay under a zero gradient
        slot.step(&mut p, &[1.0, 0.0, 0.0], 0.1, 2, &cfg).unwrap();
        let (m, v) = (slot.m[0], slot.v[0]);
        slot.step(&mut p, &[0.0; 3], 0.1, 3, &cfg).unwrap();
        assert_eq!(slot.m[0], 0.9 * m);
        assert_eq!(slot.v[0], 0.99 * v);
    }

    #[test]
    fn adam_first_step_moves_by_learning_rate() {
        let cfg = TrainConfig::default();
        let mut slot = AdamSlot::new(3);
        let mut p = [0.0; 3];
        let g = [0.3, -7.0, 1e-6];
        slot.step(&mut p, &g, 0.01, 1, &cfg).unwrap();
        // m_hat = g, v_hat = g^2  =>  update = lr * g / (|g| + eps) ~ lr * sign(g)
        for (x, g) in p.iter().zip(g) {
            let want = -0.01 * g / (g.abs() + cfg.eps);
            assert!((x - want).abs() < 1e-15);
            assert!((x.abs() - 0.01).abs() < 1e-10);
        }
        assert!(slot.step(&mut [0.0; 2], &[0.0; 2], 0.1, 2, &cfg).is_err());
    }

    #[test]
    fn groups_use_their_own_rates() {
        let mut s = scene(12);
        let r = rays(&s, 8, 13);
        let before = s.clone();
        let (_, g) = backward(&s, &r, true).unwrap();
        let cfg = TrainConfig {
            lr_tables: 1e-2,
            lr_decoder: 1e-6,
            lr_sh_map: 1e-4,
            lr_scale_map: 1e-5,
            ..Default::default()
        };
        let mut adam = Adam::new(&s);
        adam.step(&mut s, &g, &cfg, 1.0).unwrap();
        let max_move = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        assert!((max_move(s.field.tables(), before.field.tables()) - 1e-2).abs() < 1e-9);
        assert!((max_move(s.maps.sh_map(), before.maps.sh_map()) - 1e-4).abs() < 1e-9);
        assert!((max_move(s.maps.scale_map(), before.maps.scale_map()) - 1e-5).abs() < 1e-9);
        let w0 = &s.field.decoder.layers()[0].weights;
        assert!((max_move(w0, &before.field.decoder.layers()[0].weights) - 1e-6).abs() < 1e-12);
    }

    fn views(s: &MixrtScene, color: Option<[f64; 3]>) -> Vec<(Camera, Image)> {
        let mut out = Vec::new();
        for i in 0..4 {
            let cam = Camera::new(Vec3::new(0.05 * i as f64, 0.0, 0.3), IDENTITY, 10.0, [6.0, 6.0], 12, 12).unwrap();
            let img = match color {
                Some(c) => Image::filled(12, 12, c),
                None => render_mixrt(s, &cam, &RenderSettings::default()).unwrap(),
            };
            out.push((cam, img));
        }
        out
    }

    #[test]
    fn zero_iterations_leave_scene_unchanged() {
        let mut s = scene(14);
        let before = s.clone();
        let data = views(&s, Some([0.2, 0.4, 0.6]));
        let cfg = TrainConfig {
            iterations: 0,
            ..Default::default()
        };
        let rep = train(&mut s, &data, &cfg).unwrap();
        assert!(rep.losses.is_empty());
        assert_eq!(s.field, before.field);
        assert_eq!(s.maps, before.maps);
    }

    #[test]
    fn empty_dataset_rejected() {
        let mut s = scene(15);
        assert!(matches!(train(&mut s, &[], &TrainConfig::default()), Err(Error::EmptyDataset)));
    }

    #[test]
    fn single_triangle_learns_constant_color() {
        let mut rng = ChaCha8Rng::seed_from_u64(16);
        let tri = TriMesh::new(
            vec![Vec3::new(-1.0, -1.0, -0.5), Vec3::new(1.0, -1.0, -0.5), Vec3::new(0.0, 1.0, -0.5)],
            vec![Vec2::new(0.0, 0.0), Vec2::new(1.0, 0.0), Vec2::new(0.5, 1.0)],
            vec![[0, 1, 2]],
        )
        .unwrap();
        let config = HashGridConfig {
            num_levels: 2,
            table_size: 1 << 12,
            feature_dim: 2,
            min_resolution: 8,
            max_resolution: 32,
        };
        let dec = DecoderWeights::init_uniform(4, &[16, 16], 4, &mut rng).unwrap();
        let field = HashGridField::random(config, dec, &mut rng).unwrap();
        let maps = DisplacementMaps::identity_init(8, 1, 1e-2).unwrap();
        let mut s = MixrtScene::new(tri, maps, field).unwrap();
        let data = views(&s, Some([0.8, 0.3, 0.1]));
        let cfg = TrainConfig {
            iterations: 500,
            batch_size: 64,
            log_every: 50,
            ..Default::default()
        };
        let rep = train(&mut s, &data, &cfg).unwrap();
        let last = *rep.losses.last().unwrap();
        assert!(last < 1e-4, "final loss {last}");
        assert_eq!(rep.logged.len(), 10);
    }

    #[test]
    fn training_is_deterministic_and_keeps_geometry() {
        let target = scene(17);
        let data = views(&target, None);
        let run = || {
            let mut s = scene(18);
            let cfg = TrainConfig {
                iterations: 30,
                batch_size: 32,
                seed: 9,
                ..Default::default()
            };
            let rep = train(&mut s, &data, &cfg).unwrap();
            (s, rep)
        };
        let (a, ra) = run();
        let (b, rb) = run();
        assert_eq!(ra, rb);
        assert_eq!(a.field, b.field);
        assert_eq!(a.mesh(), scene(18).mesh());
        let n = ra.losses.len() / 10;
        let median = |v: &[f64]| {
            let mut v = v.to_vec();
            v.sort_by(f64::total_cmp);
            v[v.len() / 2]
        };
        assert!(median(&ra.losses[ra.losses.len() - n..]) < median(&ra.losses[..n]));
    }

    #[test]
    fn ablation_does_not_touch_maps() {
        let mut s = scene(19);
        let before = s.maps.clone();
        let data = views(&s, Some([0.5, 0.5, 0.5]));
        let cfg = TrainConfig {
            iterations: 5,
            batch_size: 16,
            calibrate: false,
            ..Default::default()
        };
        train(&mut s, &data, &cfg).unwrap();
        assert_eq!(s.maps, before);
    }

    #[test]
    fn config_validation() {
        let bad = [
            TrainConfig {
                lr_tables: 0.0,
                ..Default::default()
            },
            TrainConfig {
                batch_size: 0,
                ..Default::default()
            },
            TrainConfig {
                beta1: 1.0,
                ..Default::default()
            },
        ];
        for c in bad {
            assert!(c.validate().is_err());
        }
    }
}
