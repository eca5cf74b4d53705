//! The baked scene bundle: the mesh as GLB, each hash-table level reshaped
//! into 8-bit RGBA textures, the displacement maps as 8-bit textures, and a
//! JSON manifest with the layout, quantization parameters and decoder
//! weights.
//!
//! ```text
//! manifest.json
//! mesh.glb
//! hash_L{l}.png        features 0..4 of level l (hash_L{l}_p{k}.png for plane k > 0)
//! disp_sh_{i}.png      SH coefficient channels 4i..4i+4 (axis-major)
//! disp_scale.png       scale, grayscale
//! ```
//!
//! Table entry `i` of a level lives at texel `(i % width, i / width)`; a
//! stored code `c` decodes to `min + c * step` with the level's parameters.

use std::path::{Path, PathBuf};

use mixrt_core::displacement::{DisplacementMaps, QuantizationParams};
use mixrt_core::fields::{
    level_resolutions, DecoderWeights, DenseLayer, HashGridConfig, HashGridField, HASH_PRIMES,
};
use mixrt_core::quant::AffineQuant;
use mixrt_core::render::MixrtScene;
use serde::{Deserialize, Serialize};

use crate::checkpoint::{decoder_dims, GridConfigJson};
use crate::error::{MixrtError, Result};
use crate::image_io::{read_raw, write_raw};
use crate::mesh_io::{glb_bytes, read_gltf};

pub const BUNDLE_FORMAT: &str = "mixrt-bundle/1";
pub const BUNDLE_MAJOR: &str = "1";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const MESH_FILE: &str = "mesh.glb";
/// Largest texture edge.
pub const MAX_TEXTURE_DIM: u32 = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuantJson {
    pub min: f64,
    pub step: f64,
}

impl From<AffineQuant> for QuantJson {
    fn from(q: AffineQuant) -> Self {
        QuantJson { min: q.min, step: q.step }
    }
}

impl From<QuantJson> for AffineQuant {
    fn from(q: QuantJson) -> Self {
        AffineQuant { min: q.min, step: q.step }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelTexture {
    pub resolution: u32,
    /// Indexed without hashing (`x + s*(y + s*z)`, `s = resolution + 1`).
    pub dense: bool,
    pub files: Vec<String>,
    pub quant: QuantJson,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HashLayout {
    pub primes: [u32; 3],
    pub width: u32,
    pub height: u32,
    /// RGBA planes per level: `ceil(feature_dim / 4)`.
    pub planes: u32,
    pub levels: Vec<LevelTexture>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerJson {
    pub inputs: usize,
    pub outputs: usize,
    /// Row-major `outputs x inputs`.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecoderJson {
    pub dims: Vec<usize>,
    pub hidden_activation: String,
    pub color_activation: String,
    pub density_activation: String,
    pub layers: Vec<LayerJson>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DisplacementJson {
    pub resolution: u32,
    pub sh_degree: u32,
    pub sh_channels: usize,
    pub sh_files: Vec<String>,
    pub sh_quant: QuantJson,
    pub scale_file: String,
    pub scale_quant: QuantJson,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeshJson {
    pub file: String,
    pub vertices: usize,
    pub faces: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BundleManifest {
    pub format: String,
    pub grid: GridConfigJson,
    pub level_resolutions: Vec<u32>,
    pub hash: HashLayout,
    pub decoder: DecoderJson,
    pub displacement: DisplacementJson,
    pub mesh: MeshJson,
    pub background: [f64; 3],
    /// Apply the displacement maps when rendering.
    pub calibrate: bool,
}

/// Quantization parameters of every bundle texture.
#[derive(Debug, Clone, PartialEq)]
pub struct BundleQuant {
    pub tables: Vec<AffineQuant>,
    pub maps: QuantizationParams,
}

impl BundleQuant {
    /// Fits per-level table parameters and per-texture map parameters.
    pub fn fit(scene: &MixrtScene) -> Result<Self> {
        let levels = scene.field.config().num_levels as usize;
        let tables = (0..levels)
            .map(|l| AffineQuant::fit(scene.field.table(l)))
            .collect::<mixrt_core::Result<Vec<_>>>()?;
        let q = scene.maps.quantize()?;
        Ok(BundleQuant { tables, maps: q.params })
    }
}

/// `(width, height)` of the 2D layout of a table with `table_size`
/// entries: the smallest power-of-two width whose square covers the
/// table, capped at [`MAX_TEXTURE_DIM`].
pub fn table_layout(table_size: u32) -> Result<(u32, u32)> {
    if !table_size.is_power_of_two() {
        return Err(MixrtError::Usage(format!("table size {table_size} is not a power of two")));
    }
    let k = table_size.trailing_zeros();
    let w = (1u32 << k.div_ceil(2)).min(MAX_TEXTURE_DIM);
    Ok((w, table_size / w))
}

/// Texel of table entry `i` in a layout of width `w`.
pub fn entry_texel(i: u32, w: u32) -> (u32, u32) {
    (i % w, i / w)
}

/// 2D RGBA texture planes of one level: `planes[k]` holds features
/// `4k..4k+4` of every entry, row-major, zero-padded.
pub fn reshape_table_2d(table: &[f64], feature_dim: usize, quant: &AffineQuant) -> Result<(u32, u32, Vec<Vec<u8>>)> {
    let entries = table.len() / feature_dim;
    if entries * feature_dim != table.len() || entries > u32::MAX as usize {
        return Err(MixrtError::Usage("table length is not a multiple of feature_dim".into()));
    }
    let (w, h) = table_layout(entries as u32)?;
    let planes = feature_dim.div_ceil(4);
    let mut out = vec![vec![0u8; entries * 4]; planes];
    for (i, entry) in table.chunks_exact(feature_dim).enumerate() {
        let (x, y) = entry_texel(i as u32, w);
        let texel = (y * w + x) as usize;
        for (f, v) in entry.iter().enumerate() {
            out[f / 4][texel * 4 + f % 4] = quant.quantize(*v);
        }
    }
    Ok((w, h, out))
}

/// Inverse of [`reshape_table_2d`] on codes: per-entry codes, flat
/// `entries x feature_dim`.
pub fn unreshape_codes(planes: &[Vec<u8>], w: u32, h: u32, feature_dim: usize) -> Vec<u8> {
    let entries = (w * h) as usize;
    let mut out = vec![0u8; entries * feature_dim];
    for i in 0..entries {
        let (x, y) = entry_texel(i as u32, w);
        let texel = (y * w + x) as usize;
        for f in 0..feature_dim {
            out[i * feature_dim + f] = planes[f / 4][texel * 4 + f % 4];
        }
    }
    out
}

fn level_file(level: usize, plane: usize) -> String {
    if plane == 0 {
        format!("hash_L{level}.png")
    } else {
        format!("hash_L{level}_p{plane}.png")
    }
}

fn sh_planes(maps: &DisplacementMaps, codes: &[u8]) -> Vec<Vec<u8>> {
    let ch = maps.sh_channels();
    let texels = (maps.resolution() * maps.resolution()) as usize;
    let planes = ch.div_ceil(4);
    let mut out = vec![vec![0u8; texels * 4]; planes];
    for t in 0..texels {
        for c in 0..ch {
            out[c / 4][t * 4 + c % 4] = codes[t * ch + c];
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExportReport {
    pub path: PathBuf,
    /// `(file name, bytes)` in write order.
    pub files: Vec<(String, u64)>,
    pub total_bytes: u64,
    pub quant: BundleQuant,
    pub manifest: BundleManifest,
}

fn check_finite(scene: &MixrtScene) -> Result<()> {
    let dec_ok = scene
        .field
        .decoder
        .layers()
        .iter()
        .all(|l| l.weights.iter().chain(&l.bias).all(|v| v.is_finite()));
    if !dec_ok
        || scene.field.tables().iter().any(|v| !v.is_finite())
        || scene.maps.sh_map().iter().any(|v| !v.is_finite())
        || scene.maps.scale_map().iter().any(|v| !v.is_finite())
    {
        return Err(mixrt_core::Error::NonFinite("scene parameters").into());
    }
    Ok(())
}

/// Writes the bundle for `scene` to `path` atomically. `quant` reuses
/// existing quantization parameters (e.g. from an imported bundle), which
/// makes re-export byte-identical.
pub fn export_bundle(
    scene: &MixrtScene,
    path: &Path,
    background: [f64; 3],
    calibrate: bool,
    quant: Option<&BundleQuant>,
) -> Result<ExportReport> {
    check_finite(scene)?;
    let quant = match quant {
        Some(q) => q.clone(),
        None => BundleQuant::fit(scene)?,
    };
    let cfg = *scene.field.config();
    if quant.tables.len() != cfg.num_levels as usize {
        return Err(MixrtError::Usage("quantization parameters do not match the level count".into()));
    }
    let file_name = path
        .file_name()
        .ok_or_else(|| MixrtError::Usage(format!("{}: not a directory path", path.display())))?;
    let parent = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    std::fs::create_dir_all(parent).map_err(|e| MixrtError::io(parent, e))?;
    let tmp = parent.join(format!(".{}.tmp-{}", file_name.to_string_lossy(), std::process::id()));
    if tmp.exists() {
        std::fs::remove_dir_all(&tmp).map_err(|e| MixrtError::io(&tmp, e))?;
    }
    std::fs::create_dir(&tmp).map_err(|e| MixrtError::io(&tmp, e))?;

    let result = write_bundle_files(scene, &tmp, background, calibrate, &quant);
    let (files, manifest) = match result {
        Ok(v) => v,
        Err(e) => {
            let _ = std::fs::remove_dir_all(&tmp);
            return Err(e);
        }
    };
    if path.exists() {
        let old = parent.join(format!(".{}.old-{}", file_name.to_string_lossy(), std::process::id()));
        std::fs::rename(path, &old).map_err(|e| MixrtError::io(path, e))?;
        std::fs::rename(&tmp, path).map_err(|e| MixrtError::io(path, e))?;
        std::fs::remove_dir_all(&old).map_err(|e| MixrtError::io(&old, e))?;
    } else {
        std::fs::rename(&tmp, path).map_err(|e| MixrtError::io(path, e))?;
    }
    let total_bytes = files.iter().map(|f| f.1).sum();
    Ok(ExportReport {
        path: path.to_path_buf(),
        files,
        total_bytes,
        quant,
        manifest,
    })
}

fn write_bundle_files(
    scene: &MixrtScene,
    dir: &Path,
    background: [f64; 3],
    calibrate: bool,
    quant: &BundleQuant,
) -> Result<(Vec<(String, u64)>, BundleManifest)> {
    let cfg = *scene.field.config();
    let feat = cfg.feature_dim as usize;
    let mut files = Vec::new();
    let mut record = |name: &str| -> Result<()> {
        let p = dir.join(name);
        let len = std::fs::metadata(&p).map_err(|e| MixrtError::io(&p, e))?.len();
        files.push((name.to_string(), len));
        Ok(())
    };

    std::fs::write(dir.join(MESH_FILE), glb_bytes(scene.mesh())).map_err(|e| MixrtError::io(dir.join(MESH_FILE), e))?;
    record(MESH_FILE)?;

    let (w, h) = table_layout(cfg.table_size)?;
    let resolutions = level_resolutions(&cfg)?;
    let mut levels = Vec::new();
    for (l, q) in quant.tables.iter().enumerate() {
        let (_, _, planes) = reshape_table_2d(scene.field.table(l), feat, q)?;
        let mut names = Vec::new();
        for (k, plane) in planes.iter().enumerate() {
            let name = level_file(l, k);
            write_raw(&dir.join(&name), w, h, 4, plane)?;
            record(&name)?;
            names.push(name);
        }
        levels.push(LevelTexture {
            resolution: resolutions[l],
            dense: scene.field.is_dense(l),
            files: names,
            quant: (*q).into(),
        });
    }

    let maps = &scene.maps;
    let r = maps.resolution();
    let qm = maps.quantize_with(quant.maps);
    let mut sh_files = Vec::new();
    for (i, plane) in sh_planes(maps, &qm.sh_codes).iter().enumerate() {
        let name = format!("disp_sh_{i}.png");
        write_raw(&dir.join(&name), r, r, 4, plane)?;
        record(&name)?;
        sh_files.push(name);
    }
    let scale_file = "disp_scale.png".to_string();
    write_raw(&dir.join(&scale_file), r, r, 1, &qm.scale_codes)?;
    record(&scale_file)?;

    let dec = &scene.field.decoder;
    let manifest = BundleManifest {
        format: BUNDLE_FORMAT.into(),
        grid: (&cfg).into(),
        level_resolutions: resolutions,
        hash: HashLayout {
            primes: HASH_PRIMES,
            width: w,
            height: h,
            planes: feat.div_ceil(4) as u32,
            levels,
        },
        decoder: DecoderJson {
            dims: decoder_dims(dec),
            hidden_activation: "relu".into(),
            color_activation: "sigmoid".into(),
            density_activation: "exp".into(),
            layers: dec
                .layers()
                .iter()
                .map(|l| LayerJson {
                    inputs: l.inputs,
                    outputs: l.outputs,
                    weights: l.weights.clone(),
                    bias: l.bias.clone(),
                })
                .collect(),
        },
        displacement: DisplacementJson {
            resolution: r,
            sh_degree: maps.sh_degree(),
            sh_channels: maps.sh_channels(),
            sh_files,
            sh_quant: quant.maps.sh.into(),
            scale_file,
            scale_quant: quant.maps.scale.into(),
        },
        mesh: MeshJson {
            file: MESH_FILE.into(),
            vertices: scene.mesh().vertex_count(),
            faces: scene.mesh().face_count(),
        },
        background,
        calibrate,
    };
    let text = manifest_to_string(&manifest);
    std::fs::write(dir.join(MANIFEST_FILE), &text).map_err(|e| MixrtError::io(dir.join(MANIFEST_FILE), e))?;
    record(MANIFEST_FILE)?;
    Ok((files, manifest))
}

/// Canonical manifest text: pretty JSON in declaration order.
pub fn manifest_to_string(m: &BundleManifest) -> String {
    let mut s = serde_json::to_string_pretty(m).expect("serializable");
    s.push('\n');
    s
}

pub fn parse_manifest(text: &str, path: &Path) -> Result<BundleManifest> {
    // check the version before the full schema so a future major gets the
    // right diagnostic
    let raw: serde_json::Value = serde_json::from_str(text).map_err(|e| MixrtError::format(path, e))?;
    let format = raw
        .get("format")
        .and_then(|f| f.as_str())
        .ok_or_else(|| MixrtError::format(path, "manifest has no format string"))?;
    check_version(format)?;
    serde_json::from_value(raw).map_err(|e| MixrtError::format(path, e))
}

fn check_version(format: &str) -> Result<()> {
    let major = format
        .strip_prefix("mixrt-bundle/")
        .map(|v| v.split('.').next().unwrap_or(""));
    if major != Some(BUNDLE_MAJOR) {
        return Err(MixrtError::UnsupportedVersion {
            found: format.to_string(),
            expected: BUNDLE_MAJOR.to_string(),
        });
    }
    Ok(())
}

/// A scene read back from a bundle, with its stored codes and parameters.
#[derive(Debug, Clone)]
pub struct ImportedBundle {
    pub scene: MixrtScene,
    pub manifest: BundleManifest,
    pub quant: BundleQuant,
    /// Per level, `table_size x feature_dim` codes.
    pub table_codes: Vec<Vec<u8>>,
}

fn read_texture(dir: &Path, name: &str, w: u32, h: u32, channels: u8) -> Result<Vec<u8>> {
    let raw = read_raw(&dir.join(name))?;
    if raw.width != w || raw.height != h {
        return Err(MixrtError::BundleDimension {
            file: name.to_string(),
            expected: format!("{w}x{h}"),
            found: format!("{}x{}", raw.width, raw.height),
        });
    }
    if raw.channels != channels {
        return Err(MixrtError::BundleDimension {
            file: name.to_string(),
            expected: format!("{channels} channels"),
            found: format!("{} channels", raw.channels),
        });
    }
    Ok(raw.data)
}

pub fn import_bundle(dir: &Path) -> Result<ImportedBundle> {
    let mpath = dir.join(MANIFEST_FILE);
    let text = std::fs::read_to_string(&mpath).map_err(|e| MixrtError::io(&mpath, e))?;
    let manifest = parse_manifest(&text, &mpath)?;
    let cfg: HashGridConfig = manifest.grid.into();
    cfg.validate()?;
    if level_resolutions(&cfg)? != manifest.level_resolutions {
        return Err(MixrtError::format(&mpath, "level resolutions do not follow from the grid config"));
    }
    let feat = cfg.feature_dim as usize;
    let (w, h) = table_layout(cfg.table_size)?;
    let layout = &manifest.hash;
    if (layout.width, layout.height) != (w, h) || layout.planes as usize != feat.div_ceil(4) {
        return Err(MixrtError::format(&mpath, "hash texture layout does not match the grid config"));
    }
    if layout.levels.len() != cfg.num_levels as usize {
        return Err(MixrtError::format(&mpath, "level count does not match the grid config"));
    }

    let mut tables = Vec::with_capacity(cfg.num_levels as usize * cfg.table_size as usize * feat);
    let mut table_codes = Vec::new();
    let mut table_quant = Vec::new();
    for level in &layout.levels {
        if level.files.len() != layout.planes as usize {
            return Err(MixrtError::format(&mpath, "wrong number of planes for a level"));
        }
        let planes = level
            .files
            .iter()
            .map(|f| read_texture(dir, f, w, h, 4))
            .collect::<Result<Vec<_>>>()?;
        let q: AffineQuant = level.quant.into();
        q.validate()?;
        let codes = unreshape_codes(&planes, w, h, feat);
        tables.extend(codes.iter().map(|c| q.dequantize(*c)));
        table_codes.push(codes);
        table_quant.push(q);
    }

    let layers = manifest
        .decoder
        .layers
        .iter()
        .map(|l| {
            if l.weights.len() != l.inputs * l.outputs || l.bias.len() != l.outputs {
                return Err(MixrtError::format(&mpath, "decoder layer size mismatch"));
            }
            Ok(DenseLayer {
                inputs: l.inputs,
                outputs: l.outputs,
                weights: l.weights.clone(),
                bias: l.bias.clone(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let decoder = DecoderWeights::new(layers)?;
    let field = HashGridField::from_tables(cfg, tables, decoder)?;

    let d = &manifest.displacement;
    let r = d.resolution;
    let texels = (r as usize) * (r as usize);
    let maps_proto = DisplacementMaps::zeros(r, d.sh_degree)?;
    let ch = maps_proto.sh_channels();
    if d.sh_channels != ch || d.sh_files.len() != ch.div_ceil(4) {
        return Err(MixrtError::format(&mpath, "displacement channel count mismatch"));
    }
    let mut sh_codes = vec![0u8; texels * ch];
    for (i, name) in d.sh_files.iter().enumerate() {
        let plane = read_texture(dir, name, r, r, 4)?;
        for t in 0..texels {
            for k in 0..4 {
                let c = 4 * i + k;
                if c < ch {
                    sh_codes[t * ch + c] = plane[t * 4 + k];
                }
            }
        }
    }
    let scale_codes = read_texture(dir, &d.scale_file, r, r, 1)?;
    let maps_quant = QuantizationParams {
        sh: d.sh_quant.into(),
        scale: d.scale_quant.into(),
    };
    maps_quant.sh.validate()?;
    maps_quant.scale.validate()?;
    let maps = DisplacementMaps::from_parts(
        r,
        d.sh_degree,
        sh_codes.iter().map(|c| maps_quant.sh.dequantize(*c)).collect(),
        scale_codes.iter().map(|c| maps_quant.scale.dequantize(*c)).collect(),
    )?;

    let mesh = read_gltf(&dir.join(&manifest.mesh.file))?;
    if mesh.vertex_count() != manifest.mesh.vertices || mesh.face_count() != manifest.mesh.faces {
        return Err(MixrtError::BundleDimension {
            file: manifest.mesh.file.clone(),
            expected: format!("{} vertices, {} faces", manifest.mesh.vertices, manifest.mesh.faces),
            found: format!("{} vertices, {} faces", mesh.vertex_count(), mesh.face_count()),
        });
    }
    let scene = MixrtScene::new(mesh, maps, field)?;
    Ok(ImportedBundle {
        scene,
        manifest,
        quant: BundleQuant {
            tables: table_quant,
            maps: maps_quant,
        },
        table_codes,
    })
}
