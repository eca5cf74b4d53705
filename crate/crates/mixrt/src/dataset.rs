//! Posed-image datasets: a `cameras.json` manifest next to per-view PNGs
//! and the scene mesh.

use std::path::{Path, PathBuf};

use mixrt_core::geometry::TriMesh;
use mixrt_core::render::{Camera, Image};
use mixrt_core::Vec3;
use serde::{Deserialize, Serialize};

use crate::error::{MixrtError, Result};
use crate::image_io::read_image;
use crate::mesh_io::read_mesh;

pub const CAMERAS_FILE: &str = "cameras.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CameraRecord {
    /// Image path relative to the dataset root.
    pub image: String,
    pub width: u32,
    pub height: u32,
    pub focal: f64,
    pub principal: [f64; 2],
    pub position: [f64; 3],
    /// World-from-camera rotation, row-major; the camera looks down `-z`.
    pub rotation: [[f64; 3]; 3],
}

impl CameraRecord {
    pub fn from_camera(cam: &Camera, image: String) -> Self {
        CameraRecord {
            image,
            width: cam.width,
            height: cam.height,
            focal: cam.focal,
            principal: cam.principal,
            position: cam.position.to_array(),
            rotation: cam.rotation,
        }
    }

    pub fn camera(&self) -> Result<Camera> {
        Ok(Camera::new(
            Vec3::from_array(self.position),
            self.rotation,
            self.focal,
            self.principal,
            self.width,
            self.height,
        )?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub scene: String,
    pub seed: u64,
    /// Ground-truth lookup offset along the view direction (0 = none).
    pub view_offset: f64,
    pub mesh: String,
    pub background: [f64; 3],
    pub train: Vec<CameraRecord>,
    pub test: Vec<CameraRecord>,
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub root: PathBuf,
    pub manifest: DatasetManifest,
    pub mesh: TriMesh,
    pub train: Vec<(Camera, Image)>,
    pub test: Vec<(Camera, Image)>,
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| MixrtError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| MixrtError::format(path, e))
}

/// Pretty JSON with a trailing newline; key order follows declaration
/// order, so output is stable.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).expect("serializable");
    text.push('\n');
    std::fs::write(path, text).map_err(|e| MixrtError::io(path, e))
}

pub fn read_manifest(root: &Path) -> Result<DatasetManifest> {
    read_json(&root.join(CAMERAS_FILE))
}

fn load_views(root: &Path, records: &[CameraRecord]) -> Result<Vec<(Camera, Image)>> {
    records
        .iter()
        .map(|r| {
            let path = root.join(&r.image);
            let img = read_image(&path)?;
            if img.width() != r.width || img.height() != r.height {
                return Err(MixrtError::format(
                    &path,
                    format!("image is {}x{}, camera says {}x{}", img.width(), img.height(), r.width, r.height),
                ));
            }
            Ok((r.camera()?, img))
        })
        .collect()
}

pub fn load_dataset(root: &Path) -> Result<Dataset> {
    let manifest = read_manifest(root)?;
    let mesh = read_mesh(&root.join(&manifest.mesh))?;
    let train = load_views(root, &manifest.train)?;
    let test = load_views(root, &manifest.test)?;
    Ok(Dataset {
        root: root.to_path_buf(),
        manifest,
        mesh,
        train,
        test,
    })
}
