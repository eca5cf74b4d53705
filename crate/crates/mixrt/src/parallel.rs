//! Row-parallel rendering on the rayon pool.

use mixrt_core::render::{render_row, Camera, Image, MixrtScene, RenderMode, RenderSettings, ShadeScratch};
use rayon::prelude::*;

use crate::error::Result;

/// Renders with one task per image row. Rows share no mutable state, so
/// the result is bit-identical to the single-threaded renderers.
pub fn render_parallel(scene: &MixrtScene, camera: &Camera, settings: &RenderSettings) -> Result<Image> {
    settings.validate()?;
    camera.validate()?;
    let rows: Vec<Vec<[f64; 3]>> = (0..camera.height)
        .into_par_iter()
        .map_init(ShadeScratch::default, |scratch, y| render_row(scene, camera, settings, y, scratch))
        .collect::<mixrt_core::Result<_>>()?;
    Ok(Image::from_pixels(camera.width, camera.height, rows.concat())?)
}

/// Shorthand for the surface pipeline.
pub fn render_mixrt_parallel(scene: &MixrtScene, camera: &Camera, settings: &RenderSettings) -> Result<Image> {
    let s = RenderSettings {
        mode: RenderMode::Mixrt,
        ..*settings
    };
    render_parallel(scene, camera, &s)
}
