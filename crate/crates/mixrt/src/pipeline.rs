//! Scene construction and evaluation shared by the command line and tests.

use mixrt_core::displacement::DisplacementMaps;
use mixrt_core::fields::{DecoderWeights, HashGridConfig, HashGridField};
use mixrt_core::geometry::TriMesh;
use mixrt_core::render::{psnr, Camera, Image, MixrtScene, RenderSettings};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::parallel::render_mixrt_parallel;

/// Shape of a fresh, untrained scene.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub grid: HashGridConfig,
    pub hidden: Vec<usize>,
    pub map_resolution: u32,
    pub sh_degree: u32,
    /// Amplitude of the random SH-map initialization (the scale map starts
    /// at zero, so the initial displacement is still the identity).
    pub sh_init: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            grid: HashGridConfig::default(),
            hidden: vec![16, 16],
            map_resolution: 1536,
            sh_degree: 2,
            sh_init: 0.1,
        }
    }
}

pub fn init_scene(mesh: TriMesh, model: &ModelConfig, seed: u64) -> Result<MixrtScene> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let decoder = DecoderWeights::init_uniform(model.grid.embedding_dim(), &model.hidden, 4, &mut rng)?;
    let field = HashGridField::random(model.grid, decoder, &mut rng)?;
    let maps = DisplacementMaps::identity_init(model.map_resolution, model.sh_degree, model.sh_init)?;
    Ok(MixrtScene::new(mesh, maps, field)?)
}

/// Renders every view and returns the per-view PSNRs against the reference
/// images.
pub fn evaluate(scene: &MixrtScene, views: &[(Camera, Image)], settings: &RenderSettings) -> Result<Vec<f64>> {
    views
        .iter()
        .map(|(cam, gt)| {
            let img = render_mixrt_parallel(scene, cam, settings)?;
            Ok(psnr(&img, gt)?)
        })
        .collect()
}

/// PSNR of the pooled error over all views (not the mean of per-view
/// PSNRs).
pub fn evaluate_pooled(scene: &MixrtScene, views: &[(Camera, Image)], settings: &RenderSettings) -> Result<f64> {
    let mut sum = 0.0;
    let mut n = 0usize;
    for (cam, gt) in views {
        let img = render_mixrt_parallel(scene, cam, settings)?;
        sum += mixrt_core::render::mse(&img, gt)? * (gt.pixels().len() * 3) as f64;
        n += gt.pixels().len() * 3;
    }
    let m = sum / n.max(1) as f64;
    Ok(if m <= 0.0 {
        mixrt_core::render::PSNR_CAP
    } else {
        (-10.0 * m.log10()).min(mixrt_core::render::PSNR_CAP)
    })
}
