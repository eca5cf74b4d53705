use mixrt::checkpoint::{load_checkpoint, save_checkpoint};
use mixrt::dataset::{load_dataset, read_manifest};
use mixrt::error::MixrtError;
use mixrt::image_io::{read_image, to_u8, write_image};
use mixrt::mesh_io::{read_mesh, write_mesh};
use mixrt::pipeline::{init_scene, ModelConfig};
use mixrt::synthetic::{box_room_mesh, generate, write_dataset, SceneKind, SyntheticOptions};
use mixrt_core::fields::HashGridConfig;
use mixrt_core::geometry::TriMesh;
use mixrt_core::render::{psnr, Image};

fn assert_meshes_close(a: &TriMesh, b: &TriMesh) {
    assert_eq!(a.faces(), b.faces());
    assert_eq!(a.vertex_count(), b.vertex_count());
    // Files store f32 attributes.
    for (p, q) in a.positions().iter().zip(b.positions()) {
        assert!((*p - *q).norm() < 1e-6, "{p:?} vs {q:?}");
    }
    for (s, t) in a.uvs().iter().zip(b.uvs()) {
        assert!((s.x - t.x).abs() < 1e-6 && (s.y - t.y).abs() < 1e-6);
    }
}

/// Same triangles with the same corner attributes, whatever the vertex
/// numbering.
fn assert_same_triangles(a: &TriMesh, b: &TriMesh) {
    assert_eq!(a.face_count(), b.face_count());
    for (fa, fb) in a.faces().iter().zip(b.faces()) {
        for k in 0..3 {
            let (i, j) = (fa[k] as usize, fb[k] as usize);
            assert!((a.positions()[i] - b.positions()[j]).norm() < 1e-6);
            assert!((a.uvs()[i].x - b.uvs()[j].x).abs() < 1e-6 && (a.uvs()[i].y - b.uvs()[j].y).abs() < 1e-6);
        }
    }
}

#[test]
fn mesh_round_trips_through_glb_and_obj() {
    let mesh = box_room_mesh(6).unwrap();
    let tmp = tempfile::tempdir().unwrap();
    let glb = tmp.path().join("m.glb");
    write_mesh(&glb, &mesh).unwrap();
    assert_meshes_close(&mesh, &read_mesh(&glb).unwrap());
    // The OBJ reader renumbers shared vertices.
    let obj = tmp.path().join("m.obj");
    write_mesh(&obj, &mesh).unwrap();
    assert_same_triangles(&mesh, &read_mesh(&obj).unwrap());
    let empty = tmp.path().join("empty.glb");
    write_mesh(&empty, &TriMesh::empty()).unwrap();
    assert!(read_mesh(&empty).unwrap().is_empty());
}

#[test]
fn mesh_read_errors() {
    let tmp = tempfile::tempdir().unwrap();
    assert!(matches!(read_mesh(&tmp.path().join("none.glb")), Err(MixrtError::MissingFile { .. })));
    let bad = tmp.path().join("bad.glb");
    std::fs::write(&bad, b"not a gltf").unwrap();
    assert!(matches!(read_mesh(&bad), Err(MixrtError::Format { .. })));
    let no_uv = tmp.path().join("no_uv.obj");
    std::fs::write(&no_uv, "v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 3\n").unwrap();
    assert!(read_mesh(&no_uv).is_err());
    assert!(matches!(read_mesh(&tmp.path().join("x.ply")), Err(MixrtError::Usage(_))));
}

#[test]
fn image_round_trip_is_exact_on_8_bit_values() {
    let pixels: Vec<[f64; 3]> = (0..12u32 * 5)
        .map(|i| [(i % 256) as f64 / 255.0, ((i * 7) % 256) as f64 / 255.0, 1.0])
        .collect();
    let img = Image::from_pixels(12, 5, pixels).unwrap();
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("i.png");
    write_image(&path, &img).unwrap();
    let back = read_image(&path).unwrap();
    assert_eq!(back, img);
    assert_eq!(psnr(&back, &img).unwrap(), 99.0);
    assert_eq!(to_u8(0.5), 128);
    assert_eq!(to_u8(-1.0), 0);
    assert_eq!(to_u8(2.0), 255);
}

#[test]
fn checkpoint_round_trip_is_bit_exact() {
    let model = ModelConfig {
        grid: HashGridConfig { num_levels: 2, table_size: 1 << 8, feature_dim: 4, min_resolution: 4, max_resolution: 16 },
        map_resolution: 8,
        ..ModelConfig::default()
    };
    let scene = init_scene(box_room_mesh(3).unwrap(), &model, 9).unwrap();
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("ck");
    save_checkpoint(&dir, &scene, false).unwrap();
    let (back, meta) = load_checkpoint(&dir).unwrap();
    assert!(!meta.calibrate);
    assert_eq!(back.field, scene.field);
    assert_eq!(back.maps, scene.maps);
    // The mesh goes through f32 storage.
    assert_meshes_close(scene.mesh(), back.mesh());
    assert!(matches!(load_checkpoint(&tmp.path().join("none")), Err(MixrtError::MissingFile { .. })));
}

#[test]
fn dataset_directory_matches_in_memory_generation() {
    let opts = SyntheticOptions { width: 24, height: 16, ..SyntheticOptions::new(SceneKind::Sphere) };
    let tmp = tempfile::tempdir().unwrap();
    let manifest = write_dataset(tmp.path(), &opts).unwrap();
    assert_eq!(read_manifest(tmp.path()).unwrap(), manifest);
    let data = load_dataset(tmp.path()).unwrap();
    let mem = generate(&opts).unwrap();
    assert_eq!(data.train.len(), 32);
    assert_eq!(data.test.len(), 8);
    for ((c, img), (mc, mimg)) in data.train.iter().chain(&data.test).zip(mem.train.iter().chain(&mem.test)) {
        assert_eq!(c.width, mc.width);
        assert!((c.position - mc.position).norm() < 1e-12);
        // PNG storage rounds to 8 bits.
        let worst = img
            .pixels()
            .iter()
            .zip(mimg.pixels())
            .flat_map(|(a, b)| (0..3).map(move |k| (a[k] - b[k]).abs()))
            .fold(0.0, f64::max);
        assert!(worst <= 0.5 / 255.0 + 1e-12);
    }
}
