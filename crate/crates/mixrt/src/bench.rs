//! Frame-time profiling over hash-grid level counts and table sizes.

use std::fmt::Write as _;
use std::time::Instant;

use mixrt_core::displacement::DisplacementMaps;
use mixrt_core::fields::{DecoderWeights, HashGridConfig, HashGridField};
use mixrt_core::geometry::TriMesh;
use mixrt_core::render::{Camera, MixrtScene, RenderSettings};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{MixrtError, Result};
use crate::parallel::render_mixrt_parallel;

pub const CSV_HEADER: &str = "levels,table_size,ms_median,ms_p10,ms_p90";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BenchRow {
    pub levels: u32,
    pub table_size: u32,
    pub ms_median: f64,
    pub ms_p10: f64,
    pub ms_p90: f64,
}

#[derive(Debug, Clone)]
pub struct BenchOptions {
    pub frames: usize,
    pub min_resolution: u32,
    pub max_resolution: u32,
    pub feature_dim: u32,
    pub hidden: Vec<usize>,
    pub seed: u64,
}

impl Default for BenchOptions {
    fn default() -> Self {
        let d = HashGridConfig::default();
        BenchOptions {
            frames: 5,
            min_resolution: d.min_resolution,
            max_resolution: d.max_resolution,
            feature_dim: d.feature_dim,
            hidden: vec![16, 16],
            seed: 0,
        }
    }
}

/// Nearest-rank percentile of sorted values.
pub fn percentile(sorted: &[f64], q: f64) -> f64 {
    let rank = ((q * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len());
    sorted[rank - 1]
}

pub fn median(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

/// Grid with `levels` levels between the option's resolutions; a single
/// level uses the finest resolution.
pub fn bench_config(levels: u32, table_size: u32, opts: &BenchOptions) -> HashGridConfig {
    HashGridConfig {
        num_levels: levels,
        table_size,
        feature_dim: opts.feature_dim,
        min_resolution: if levels == 1 { opts.max_resolution } else { opts.min_resolution },
        max_resolution: opts.max_resolution,
    }
}

fn build_scene(
    mesh: &TriMesh,
    maps: &DisplacementMaps,
    config: HashGridConfig,
    opts: &BenchOptions,
) -> Result<MixrtScene> {
    if config.num_levels == 0 {
        return Err(MixrtError::Usage("level count must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ ((config.num_levels as u64) << 32) ^ config.table_size as u64);
    let dec = DecoderWeights::init_uniform(config.embedding_dim(), &opts.hidden, 4, &mut rng)?;
    let field = HashGridField::random(config, dec, &mut rng)?;
    Ok(MixrtScene::new(mesh.clone(), maps.clone(), field)?)
}

/// Times every configuration with frames interleaved round-robin, so slow
/// drift of the host affects all configurations alike.
fn time_configs(
    mesh: &TriMesh,
    maps: &DisplacementMaps,
    camera: &Camera,
    configs: &[HashGridConfig],
    opts: &BenchOptions,
) -> Result<Vec<BenchRow>> {
    if opts.frames == 0 {
        return Err(MixrtError::Usage("need at least one frame".into()));
    }
    let scenes = configs.iter().map(|&c| build_scene(mesh, maps, c, opts)).collect::<Result<Vec<_>>>()?;
    let settings = RenderSettings::default();
    for scene in &scenes {
        render_mixrt_parallel(scene, camera, &settings)?;
    }
    let mut ms = vec![Vec::with_capacity(opts.frames); scenes.len()];
    for _ in 0..opts.frames {
        for (scene, times) in scenes.iter().zip(&mut ms) {
            let t0 = Instant::now();
            let img = render_mixrt_parallel(scene, camera, &settings)?;
            times.push(t0.elapsed().as_secs_f64() * 1e3);
            std::hint::black_box(img);
        }
    }
    Ok(configs
        .iter()
        .zip(ms)
        .map(|(c, mut times)| {
            times.sort_by(f64::total_cmp);
            BenchRow {
                levels: c.num_levels,
                table_size: c.table_size,
                ms_median: median(&times),
                ms_p10: percentile(&times, 0.1),
                ms_p90: percentile(&times, 0.9),
            }
        })
        .collect())
}

/// Benchmark maps: identity-initialized SH with a nonzero scale, so
/// calibration does real work.
pub fn bench_maps(resolution: u32, sh_degree: u32, seed: u64) -> Result<DisplacementMaps> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut maps = DisplacementMaps::identity_init(resolution, sh_degree, 0.1)?;
    for s in maps.scale_map_mut() {
        *s = rng.random_range(-0.01..0.01);
    }
    Ok(maps)
}

/// Median frame time per level count at a fixed table size.
pub fn bench_levels(
    mesh: &TriMesh,
    maps: &DisplacementMaps,
    camera: &Camera,
    level_counts: &[u32],
    table_size: u32,
    opts: &BenchOptions,
) -> Result<Vec<BenchRow>> {
    if level_counts.contains(&0) {
        return Err(MixrtError::Usage("level count must be at least 1".into()));
    }
    let configs: Vec<_> = level_counts.iter().map(|&l| bench_config(l, table_size, opts)).collect();
    let rows = time_configs(mesh, maps, camera, &configs, opts)?;
    for r in &rows {
        log::info!("levels {}: {:.2} ms", r.levels, r.ms_median);
    }
    Ok(rows)
}

/// Median frame time per table size at a fixed level count.
pub fn bench_table_sizes(
    mesh: &TriMesh,
    maps: &DisplacementMaps,
    camera: &Camera,
    levels: u32,
    table_sizes: &[u32],
    opts: &BenchOptions,
) -> Result<Vec<BenchRow>> {
    let configs: Vec<_> = table_sizes.iter().map(|&t| bench_config(levels, t, opts)).collect();
    let rows = time_configs(mesh, maps, camera, &configs, opts)?;
    for r in &rows {
        log::info!("table size {}: {:.2} ms", r.table_size, r.ms_median);
    }
    Ok(rows)
}

pub fn to_csv(rows: &[BenchRow]) -> String {
    let mut s = String::from(CSV_HEADER);
    s.push('\n');
    for r in rows {
        writeln!(s, "{},{},{:.4},{:.4},{:.4}", r.levels, r.table_size, r.ms_median, r.ms_p10, r.ms_p90).unwrap();
    }
    s
}
