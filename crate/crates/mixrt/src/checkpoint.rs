//! Full-precision trained scenes: `scene.json` plus raw little-endian `f64`
//! blobs and the mesh as GLB.

use std::path::Path;

use mixrt_core::displacement::DisplacementMaps;
use mixrt_core::fields::{DecoderWeights, DenseLayer, HashGridConfig, HashGridField};
use mixrt_core::render::MixrtScene;
use serde::{Deserialize, Serialize};

use crate::dataset::{read_json, write_json};
use crate::error::{MixrtError, Result};
use crate::mesh_io::{read_gltf, write_glb};

pub const CHECKPOINT_FORMAT: &str = "mixrt-checkpoint/1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridConfigJson {
    pub num_levels: u32,
    pub table_size: u32,
    pub feature_dim: u32,
    pub min_resolution: u32,
    pub max_resolution: u32,
}

impl From<&HashGridConfig> for GridConfigJson {
    fn from(c: &HashGridConfig) -> Self {
        GridConfigJson {
            num_levels: c.num_levels,
            table_size: c.table_size,
            feature_dim: c.feature_dim,
            min_resolution: c.min_resolution,
            max_resolution: c.max_resolution,
        }
    }
}

impl From<GridConfigJson> for HashGridConfig {
    fn from(c: GridConfigJson) -> Self {
        HashGridConfig {
            num_levels: c.num_levels,
            table_size: c.table_size,
            feature_dim: c.feature_dim,
            min_resolution: c.min_resolution,
            max_resolution: c.max_resolution,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub format: String,
    pub grid: GridConfigJson,
    /// Layer sizes from input to output.
    pub decoder_dims: Vec<usize>,
    pub map_resolution: u32,
    pub sh_degree: u32,
    /// Whether the scene was trained with displacement calibration.
    pub calibrate: bool,
    pub mesh: String,
}

fn write_f64s(path: &Path, values: &[f64]) -> Result<()> {
    let bytes: Vec<u8> = values.iter().flat_map(|v| v.to_le_bytes()).collect();
    std::fs::write(path, bytes).map_err(|e| MixrtError::io(path, e))
}

fn read_f64s(path: &Path, expected: usize) -> Result<Vec<f64>> {
    let bytes = std::fs::read(path).map_err(|e| MixrtError::io(path, e))?;
    if bytes.len() != expected * 8 {
        return Err(MixrtError::format(
            path,
            format!("expected {} bytes, found {}", expected * 8, bytes.len()),
        ));
    }
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect())
}

pub fn decoder_dims(d: &DecoderWeights) -> Vec<usize> {
    let mut dims = vec![d.input_dim()];
    dims.extend(d.layers().iter().map(|l| l.outputs));
    dims
}

pub fn save_checkpoint(dir: &Path, scene: &MixrtScene, calibrate: bool) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| MixrtError::io(dir, e))?;
    let meta = CheckpointMeta {
        format: CHECKPOINT_FORMAT.into(),
        grid: scene.field.config().into(),
        decoder_dims: decoder_dims(&scene.field.decoder),
        map_resolution: scene.maps.resolution(),
        sh_degree: scene.maps.sh_degree(),
        calibrate,
        mesh: "mesh.glb".into(),
    };
    write_glb(&dir.join(&meta.mesh), scene.mesh())?;
    write_f64s(&dir.join("tables.bin"), scene.field.tables())?;
    let dec: Vec<f64> = scene
        .field
        .decoder
        .layers()
        .iter()
        .flat_map(|l| l.weights.iter().chain(&l.bias).copied())
        .collect();
    write_f64s(&dir.join("decoder.bin"), &dec)?;
    write_f64s(&dir.join("sh_map.bin"), scene.maps.sh_map())?;
    write_f64s(&dir.join("scale_map.bin"), scene.maps.scale_map())?;
    write_json(&dir.join("scene.json"), &meta)
}

pub fn load_checkpoint(dir: &Path) -> Result<(MixrtScene, CheckpointMeta)> {
    let meta_path = dir.join("scene.json");
    let meta: CheckpointMeta = read_json(&meta_path)?;
    if meta.format != CHECKPOINT_FORMAT {
        return Err(MixrtError::format(&meta_path, format!("unknown format {:?}", meta.format)));
    }
    let config: HashGridConfig = meta.grid.into();
    config.validate()?;
    if meta.decoder_dims.len() < 2 {
        return Err(MixrtError::format(&meta_path, "decoder needs at least one layer"));
    }
    let n_dec: usize = meta.decoder_dims.windows(2).map(|w| w[0] * w[1] + w[1]).sum();
    let flat = read_f64s(&dir.join("decoder.bin"), n_dec)?;
    let mut layers = Vec::new();
    let mut at = 0;
    for w in meta.decoder_dims.windows(2) {
        let mut l = DenseLayer::zeros(w[0], w[1]);
        l.weights.copy_from_slice(&flat[at..at + w[0] * w[1]]);
        at += w[0] * w[1];
        l.bias.copy_from_slice(&flat[at..at + w[1]]);
        at += w[1];
        layers.push(l);
    }
    let decoder = DecoderWeights::new(layers)?;
    let n_tables = config.num_levels as usize * config.table_size as usize * config.feature_dim as usize;
    let tables = read_f64s(&dir.join("tables.bin"), n_tables)?;
    let field = HashGridField::from_tables(config, tables, decoder)?;
    let r = meta.map_resolution as usize;
    let basis = ((meta.sh_degree + 1) * (meta.sh_degree + 1)) as usize;
    let sh = read_f64s(&dir.join("sh_map.bin"), r * r * 3 * basis)?;
    let scale = read_f64s(&dir.join("scale_map.bin"), r * r)?;
    let maps = DisplacementMaps::from_parts(meta.map_resolution, meta.sh_degree, sh, scale)?;
    let mesh = read_gltf(&dir.join(&meta.mesh))?;
    Ok((MixrtScene::new(mesh, maps, field)?, meta))
}
