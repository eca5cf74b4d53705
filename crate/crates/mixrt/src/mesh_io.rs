//! Triangle meshes in binary glTF (`.glb`) and Wavefront OBJ.
//!
//! Texture coordinates follow the glTF convention (origin at the top-left,
//! `v` growing downwards, i.e. row-major texture rows). OBJ files store `v`
//! upwards and are flipped on the way in and out.

use std::fmt::Write as _;
use std::path::Path;

use mixrt_core::geometry::TriMesh;
use mixrt_core::{Vec2, Vec3};
use serde_json::json;

use crate::error::{MixrtError, Result};

const GLB_MAGIC: u32 = 0x4654_6C67;
const CHUNK_JSON: u32 = 0x4E4F_534A;
const CHUNK_BIN: u32 = 0x004E_4942;

fn pad4(buf: &mut Vec<u8>, fill: u8) {
    while buf.len() % 4 != 0 {
        buf.push(fill);
    }
}

/// Serializes a mesh as a GLB with `POSITION`, `TEXCOORD_0` (both float)
/// and `u32` indices. Positions are narrowed to `f32`.
pub fn glb_bytes(mesh: &TriMesh) -> Vec<u8> {
    let mut bin = Vec::new();
    let n = mesh.vertex_count();
    let (mut lo, mut hi) = ([f32::INFINITY; 3], [f32::NEG_INFINITY; 3]);
    for p in mesh.positions() {
        for (axis, v) in p.to_array().into_iter().enumerate() {
            let v = v as f32;
            lo[axis] = lo[axis].min(v);
            hi[axis] = hi[axis].max(v);
            bin.extend_from_slice(&v.to_le_bytes());
        }
    }
    let uv_offset = bin.len();
    for uv in mesh.uvs() {
        bin.extend_from_slice(&(uv.x as f32).to_le_bytes());
        bin.extend_from_slice(&(uv.y as f32).to_le_bytes());
    }
    let idx_offset = bin.len();
    for f in mesh.faces() {
        for i in f {
            bin.extend_from_slice(&i.to_le_bytes());
        }
    }
    let idx_len = bin.len() - idx_offset;
    pad4(&mut bin, 0);

    let mut doc = json!({
        "asset": {"version": "2.0", "generator": "mixrt"},
        "scene": 0,
        "scenes": [{"nodes": []}],
    });
    if !mesh.is_empty() {
        doc = json!({
            "asset": {"version": "2.0", "generator": "mixrt"},
            "scene": 0,
            "scenes": [{"nodes": [0]}],
            "nodes": [{"mesh": 0}],
            "meshes": [{"primitives": [{
                "attributes": {"POSITION": 0, "TEXCOORD_0": 1},
                "indices": 2,
                "mode": 4
            }]}],
            "buffers": [{"byteLength": bin.len()}],
            "bufferViews": [
                {"buffer": 0, "byteOffset": 0, "byteLength": uv_offset, "target": 34962},
                {"buffer": 0, "byteOffset": uv_offset, "byteLength": idx_offset - uv_offset, "target": 34962},
                {"buffer": 0, "byteOffset": idx_offset, "byteLength": idx_len, "target": 34963}
            ],
            "accessors": [
                {"bufferView": 0, "componentType": 5126, "count": n, "type": "VEC3", "min": lo, "max": hi},
                {"bufferView": 1, "componentType": 5126, "count": n, "type": "VEC2"},
                {"bufferView": 2, "componentType": 5125, "count": mesh.face_count() * 3, "type": "SCALAR"}
            ]
        });
    }
    let mut json_bytes = serde_json::to_vec(&doc).expect("json");
    pad4(&mut json_bytes, b' ');

    let has_bin = !mesh.is_empty();
    let total = 12 + 8 + json_bytes.len() + if has_bin { 8 + bin.len() } else { 0 };
    let mut out = Vec::with_capacity(total);
    out.extend_from_slice(&GLB_MAGIC.to_le_bytes());
    out.extend_from_slice(&2u32.to_le_bytes());
    out.extend_from_slice(&(total as u32).to_le_bytes());
    out.extend_from_slice(&(json_bytes.len() as u32).to_le_bytes());
    out.extend_from_slice(&CHUNK_JSON.to_le_bytes());
    out.extend_from_slice(&json_bytes);
    if has_bin {
        out.extend_from_slice(&(bin.len() as u32).to_le_bytes());
        out.extend_from_slice(&CHUNK_BIN.to_le_bytes());
        out.extend_from_slice(&bin);
    }
    out
}

pub fn write_glb(path: &Path, mesh: &TriMesh) -> Result<()> {
    std::fs::write(path, glb_bytes(mesh)).map_err(|e| MixrtError::io(path, e))
}

/// Reads every triangle primitive of a glTF 2.0 file (binary or embedded)
/// into one mesh. Node transforms are ignored.
pub fn read_gltf(path: &Path) -> Result<TriMesh> {
    if !path.exists() {
        return Err(MixrtError::MissingFile { path: path.to_path_buf() });
    }
    let (doc, buffers, _) = gltf::import(path).map_err(|e| MixrtError::format(path, e))?;
    let mut positions = Vec::new();
    let mut uvs = Vec::new();
    let mut faces = Vec::new();
    for mesh in doc.meshes() {
        for prim in mesh.primitives() {
            if prim.mode() != gltf::mesh::Mode::Triangles {
                return Err(MixrtError::format(path, "only triangle primitives are supported"));
            }
            let reader = prim.reader(|b| buffers.get(b.index()).map(|d| &d.0[..]));
            let base = positions.len() as u32;
            let pos: Vec<[f32; 3]> = reader
                .read_positions()
                .ok_or_else(|| MixrtError::format(path, "primitive without POSITION"))?
                .collect();
            let tex: Vec<[f32; 2]> = reader
                .read_tex_coords(0)
                .ok_or_else(|| MixrtError::format(path, "primitive without TEXCOORD_0"))?
                .into_f32()
                .collect();
            if tex.len() != pos.len() {
                return Err(MixrtError::format(path, "TEXCOORD_0 count differs from POSITION"));
            }
            let idx: Vec<u32> = match reader.read_indices() {
                Some(i) => i.into_u32().collect(),
                None => (0..pos.len() as u32).collect(),
            };
            if idx.len() % 3 != 0 {
                return Err(MixrtError::format(path, "index count not a multiple of 3"));
            }
            positions.extend(pos.iter().map(|p| Vec3::new(p[0] as f64, p[1] as f64, p[2] as f64)));
            uvs.extend(tex.iter().map(|t| Vec2::new(t[0] as f64, t[1] as f64)));
            faces.extend(idx.chunks_exact(3).map(|f| [f[0] + base, f[1] + base, f[2] + base]));
        }
    }
    TriMesh::new(positions, uvs, faces).map_err(|e| MixrtError::format(path, e))
}

/// Reads an OBJ with per-vertex texture coordinates; polygons are
/// triangulated.
pub fn read_obj(path: &Path) -> Result<TriMesh> {
    if !path.exists() {
        return Err(MixrtError::MissingFile { path: path.to_path_buf() });
    }
    let opts = tobj::LoadOptions {
        single_index: true,
        triangulate: true,
        ignore_points: true,
        ignore_lines: true,
    };
    let (models, _) = tobj::load_obj(path, &opts).map_err(|e| MixrtError::format(path, e))?;
    let mut positions = Vec::new();
    let mut uvs = Vec::new();
    let mut faces = Vec::new();
    for m in models {
        let mesh = m.mesh;
        let n = mesh.positions.len() / 3;
        if mesh.texcoords.len() != 2 * n {
            return Err(MixrtError::format(path, "vertices without texture coordinates"));
        }
        let base = positions.len() as u32;
        positions.extend(
            mesh.positions
                .chunks_exact(3)
                .map(|p| Vec3::new(p[0] as f64, p[1] as f64, p[2] as f64)),
        );
        uvs.extend(
            mesh.texcoords
                .chunks_exact(2)
                .map(|t| Vec2::new(t[0] as f64, 1.0 - t[1] as f64)),
        );
        faces.extend(mesh.indices.chunks_exact(3).map(|f| [f[0] + base, f[1] + base, f[2] + base]));
    }
    TriMesh::new(positions, uvs, faces).map_err(|e| MixrtError::format(path, e))
}

pub fn write_obj(path: &Path, mesh: &TriMesh) -> Result<()> {
    let mut s = String::new();
    for p in mesh.positions() {
        writeln!(s, "v {} {} {}", p.x, p.y, p.z).unwrap();
    }
    for t in mesh.uvs() {
        writeln!(s, "vt {} {}", t.x, 1.0 - t.y).unwrap();
    }
    for f in mesh.faces() {
        let [a, b, c] = f.map(|i| i + 1);
        writeln!(s, "f {a}/{a} {b}/{b} {c}/{c}").unwrap();
    }
    std::fs::write(path, s).map_err(|e| MixrtError::io(path, e))
}

/// Dispatches on the extension: `.obj` or glTF (`.glb` / `.gltf`).
pub fn read_mesh(path: &Path) -> Result<TriMesh> {
    match path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref() {
        Some("obj") => read_obj(path),
        Some("glb") | Some("gltf") => read_gltf(path),
        _ => Err(MixrtError::Usage(format!("{}: unknown mesh extension", path.display()))),
    }
}

pub fn write_mesh(path: &Path, mesh: &TriMesh) -> Result<()> {
    match path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref() {
        Some("obj") => write_obj(path, mesh),
        Some("glb") => write_glb(path, mesh),
        _ => Err(MixrtError::Usage(format!("{}: mesh output must be .glb or .obj", path.display()))),
    }
}
