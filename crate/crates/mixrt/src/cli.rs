//! `mixrt` subcommands. Each prints one JSON line on success and exits with
//! 2 (usage), 3 (I/O) or 4 (numeric failure) otherwise.

use std::ffi::OsString;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use mixrt_core::fields::HashGridConfig;
use mixrt_core::geometry::cluster_simplify;
use mixrt_core::render::{psnr, Camera, Image, MixrtScene, RenderMode, RenderSettings};
use mixrt_core::train::{build_training_rays, train_rays, TrainConfig};
use serde_json::{json, Value};

use crate::bench::{bench_levels, bench_maps, bench_table_sizes, to_csv, BenchOptions};
use crate::bundle::{export_bundle, import_bundle, BundleQuant, MANIFEST_FILE};
use crate::checkpoint::{load_checkpoint, save_checkpoint};
use crate::dataset::{load_dataset, read_manifest, CAMERAS_FILE};
use crate::error::{MixrtError, Result};
use crate::image_io::{read_image, write_image};
use crate::mesh_io::{read_mesh, write_mesh};
use crate::parallel::render_parallel;
use crate::pipeline::{evaluate, init_scene, ModelConfig};
use crate::synthetic::{scene_mesh, write_dataset, SceneKind, SyntheticOptions};

#[derive(Debug, Parser)]
#[command(name = "mixrt", version, about = "Mesh + displacement map + hash-grid radiance fields")]
pub struct Cli {
    /// Seed for every random choice.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Worker threads (0 = available parallelism).
    #[arg(long, global = true, default_value_t = 0)]
    pub threads: usize,
    /// error, warn, info, debug or trace.
    #[arg(long, global = true, default_value = "info")]
    pub log_level: String,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic dataset (mesh, posed views, held-out views).
    MakeSynthetic(MakeSyntheticArgs),
    /// Vertex-clustering simplification of a mesh.
    Simplify(SimplifyArgs),
    /// Train field, decoder and displacement maps on a dataset.
    Train(TrainArgs),
    /// Render views of a checkpoint or bundle.
    Render(RenderArgs),
    /// PSNR between two images.
    Psnr(PsnrArgs),
    /// Frame time versus level count and table size.
    Bench(BenchArgs),
    /// Bake a checkpoint (or re-bake a bundle) into a scene bundle.
    Export(ExportArgs),
    /// Describe a dataset, checkpoint, bundle, mesh or image.
    Info(InfoArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum SceneArg {
    Tri,
    BoxRoom,
    Sphere,
}

impl From<SceneArg> for SceneKind {
    fn from(s: SceneArg) -> Self {
        match s {
            SceneArg::Tri => SceneKind::Tri,
            SceneArg::BoxRoom => SceneKind::BoxRoom,
            SceneArg::Sphere => SceneKind::Sphere,
        }
    }
}

#[derive(Debug, Args)]
pub struct MakeSyntheticArgs {
    #[arg(long, value_enum)]
    pub scene: SceneArg,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub width: Option<u32>,
    #[arg(long)]
    pub height: Option<u32>,
    #[arg(long)]
    pub train_views: Option<usize>,
    #[arg(long)]
    pub test_views: Option<usize>,
    /// Ground truth looks the pattern up at `p + h d` (view-dependent).
    #[arg(long, default_value_t = 0.0)]
    pub view_offset: f64,
    #[arg(long)]
    pub tessellation: Option<u32>,
}

#[derive(Debug, Args)]
pub struct SimplifyArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub output: PathBuf,
    #[arg(long, default_value_t = 0.01)]
    pub voxel: f64,
    /// Assign voxels in contracted space (the default).
    #[arg(long, conflicts_with = "world")]
    pub contracted: bool,
    /// Assign voxels in world space.
    #[arg(long)]
    pub world: bool,
}

#[derive(Debug, Args)]
pub struct ModelArgs {
    #[arg(long, default_value_t = 4)]
    pub levels: u32,
    #[arg(long, default_value_t = 21)]
    pub table_size_log2: u32,
    #[arg(long, default_value_t = 4)]
    pub feature_dim: u32,
    #[arg(long, default_value_t = 256)]
    pub min_res: u32,
    #[arg(long, default_value_t = 4096)]
    pub max_res: u32,
    /// Hidden layer widths, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "16,16")]
    pub hidden: Vec<usize>,
    #[arg(long, default_value_t = 1536)]
    pub map_resolution: u32,
    #[arg(long, default_value_t = 2)]
    pub sh_degree: u32,
    #[arg(long, default_value_t = 0.1)]
    pub sh_init: f64,
}

impl ModelArgs {
    pub fn model(&self) -> Result<ModelConfig> {
        if self.table_size_log2 > 31 {
            return Err(MixrtError::Usage("table size must be below 2^32".into()));
        }
        let grid = HashGridConfig {
            num_levels: self.levels,
            table_size: 1 << self.table_size_log2,
            feature_dim: self.feature_dim,
            min_resolution: if self.levels == 1 { self.max_res } else { self.min_res },
            max_resolution: self.max_res,
        };
        grid.validate()?;
        Ok(ModelConfig {
            grid,
            hidden: self.hidden.clone(),
            map_resolution: self.map_resolution,
            sh_degree: self.sh_degree,
            sh_init: self.sh_init,
        })
    }
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    /// Checkpoint directory to write.
    #[arg(long)]
    pub out: PathBuf,
    /// Train on this mesh instead of the dataset's (e.g. a simplified one).
    #[arg(long)]
    pub mesh: Option<PathBuf>,
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long, default_value_t = 2000)]
    pub iterations: usize,
    #[arg(long, default_value_t = 4096)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 1e-2)]
    pub lr_tables: f64,
    #[arg(long, default_value_t = 1e-3)]
    pub lr_decoder: f64,
    #[arg(long, default_value_t = 1e-3)]
    pub lr_sh_map: f64,
    #[arg(long, default_value_t = 1e-3)]
    pub lr_scale_map: f64,
    #[arg(long, default_value_t = 1.0)]
    pub final_lr_factor: f64,
    #[arg(long, default_value_t = 100)]
    pub log_every: usize,
    /// Train without the displacement map (ablation).
    #[arg(long)]
    pub no_calibrate: bool,
    /// Write `iteration,loss` rows here.
    #[arg(long)]
    pub loss_csv: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum, PartialEq, Eq)]
pub enum ModeArg {
    Mixrt,
    Volumetric,
}

#[derive(Debug, Clone, Copy, ValueEnum, PartialEq, Eq)]
pub enum SplitArg {
    Train,
    Test,
}

#[derive(Debug, Args)]
pub struct RenderArgs {
    #[arg(long, conflicts_with = "bundle", required_unless_present = "bundle")]
    pub checkpoint: Option<PathBuf>,
    #[arg(long)]
    pub bundle: Option<PathBuf>,
    /// Dataset providing the cameras (and references for PSNR).
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long, value_enum, default_value = "test")]
    pub split: SplitArg,
    /// Render only this view.
    #[arg(long)]
    pub index: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value = "mixrt")]
    pub mode: ModeArg,
    /// Skip displacement calibration.
    #[arg(long)]
    pub no_calibrate: bool,
    #[arg(long, value_delimiter = ',', num_args = 3)]
    pub background: Option<Vec<f64>>,
    #[arg(long, default_value_t = 256)]
    pub samples: u32,
    #[arg(long, default_value_t = 0.05)]
    pub near: f64,
    #[arg(long, default_value_t = 4.0)]
    pub far: f64,
}

#[derive(Debug, Args)]
pub struct PsnrArgs {
    pub a: PathBuf,
    pub b: PathBuf,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// Take the mesh and first held-out camera from this dataset; without
    /// it a box-room is generated in memory.
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', default_value = "1,2,4,8")]
    pub levels: Vec<u32>,
    /// Table size (log2) for the level sweep.
    #[arg(long, default_value_t = 21)]
    pub table_size_log2: u32,
    /// Table sizes (log2) to sweep at `--sweep-levels`.
    #[arg(long, value_delimiter = ',')]
    pub table_sizes: Vec<u32>,
    #[arg(long, default_value_t = 4)]
    pub sweep_levels: u32,
    #[arg(long, default_value_t = 5)]
    pub frames: usize,
    #[arg(long, default_value_t = 128)]
    pub width: u32,
    #[arg(long, default_value_t = 128)]
    pub height: u32,
    #[arg(long, default_value_t = 256)]
    pub map_resolution: u32,
    /// CSV destination (stdout when absent).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ExportArgs {
    #[arg(long, conflicts_with = "bundle", required_unless_present = "bundle")]
    pub checkpoint: Option<PathBuf>,
    /// Re-export an existing bundle with its stored quantization.
    #[arg(long)]
    pub bundle: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_delimiter = ',', num_args = 3)]
    pub background: Option<Vec<f64>>,
}

#[derive(Debug, Args)]
pub struct InfoArgs {
    pub path: PathBuf,
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let _ = env_logger::Builder::new()
        .parse_filters(&cli.log_level)
        .format_timestamp(None)
        .try_init();
    if cli.threads > 0 {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(cli.threads).build_global();
    }
    match run(&cli) {
        Ok(summary) => {
            println!("{summary}");
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.category() as i32
        }
    }
}

/// Runs a parsed command and returns its JSON summary.
pub fn run(cli: &Cli) -> Result<Value> {
    match &cli.command {
        Command::MakeSynthetic(a) => make_synthetic(a, cli.seed),
        Command::Simplify(a) => simplify(a),
        Command::Train(a) => train(a, cli.seed),
        Command::Render(a) => render(a),
        Command::Psnr(a) => {
            let v = psnr(&read_image(&a.a)?, &read_image(&a.b)?)?;
            Ok(json!({"command": "psnr", "psnr": v}))
        }
        Command::Bench(a) => bench(a, cli.seed),
        Command::Export(a) => export(a),
        Command::Info(a) => info(&a.path),
    }
}

fn make_synthetic(a: &MakeSyntheticArgs, seed: u64) -> Result<Value> {
    let mut opts = SyntheticOptions::new(a.scene.into());
    opts.seed = seed;
    opts.view_offset = a.view_offset;
    if let Some(w) = a.width {
        opts.width = w;
    }
    if let Some(h) = a.height {
        opts.height = h;
    }
    if let Some(n) = a.train_views {
        opts.train_views = n;
    }
    if let Some(n) = a.test_views {
        opts.test_views = n;
    }
    if let Some(t) = a.tessellation {
        opts.tessellation = t;
    }
    if opts.width == 0 || opts.height == 0 || opts.train_views == 0 {
        return Err(MixrtError::Usage("image size and train view count must be positive".into()));
    }
    let m = write_dataset(&a.out, &opts)?;
    let mesh = scene_mesh(&opts)?;
    Ok(json!({
        "command": "make-synthetic",
        "scene": m.scene,
        "out": a.out,
        "train_views": m.train.len(),
        "test_views": m.test.len(),
        "width": opts.width,
        "height": opts.height,
        "vertices": mesh.vertex_count(),
        "faces": mesh.face_count(),
    }))
}

fn simplify(a: &SimplifyArgs) -> Result<Value> {
    if !(a.voxel > 0.0) {
        return Err(MixrtError::Usage("--voxel must be positive".into()));
    }
    let mesh = read_mesh(&a.input)?;
    let out = cluster_simplify(&mesh, a.voxel, !a.world)?;
    write_mesh(&a.output, &out)?;
    log::info!(
        "{} -> {} vertices, {} -> {} faces",
        mesh.vertex_count(),
        out.vertex_count(),
        mesh.face_count(),
        out.face_count()
    );
    Ok(json!({
        "command": "simplify",
        "voxel": a.voxel,
        "contracted": !a.world,
        "vertices_in": mesh.vertex_count(),
        "vertices_out": out.vertex_count(),
        "faces_in": mesh.face_count(),
        "faces_out": out.face_count(),
        "reduction": mesh.vertex_count() as f64 / out.vertex_count().max(1) as f64,
    }))
}

fn train(a: &TrainArgs, seed: u64) -> Result<Value> {
    let t0 = Instant::now();
    let data = load_dataset(&a.dataset)?;
    let mesh = match &a.mesh {
        Some(p) => read_mesh(p)?,
        None => data.mesh.clone(),
    };
    let model = a.model.model()?;
    let mut scene = init_scene(mesh, &model, seed)?;
    let config = TrainConfig {
        iterations: a.iterations,
        batch_size: a.batch_size,
        lr_tables: a.lr_tables,
        lr_decoder: a.lr_decoder,
        lr_sh_map: a.lr_sh_map,
        lr_scale_map: a.lr_scale_map,
        final_lr_factor: a.final_lr_factor,
        seed,
        log_every: a.log_every,
        calibrate: !a.no_calibrate,
        ..TrainConfig::default()
    };
    config.validate()?;
    let rays = build_training_rays(&scene, &data.train)?;
    log::info!("{} training rays hit the mesh", rays.len());
    let report = train_rays(&mut scene, &rays, &config, |it, l| log::info!("iteration {it}: loss {l:.6}"))?;
    save_checkpoint(&a.out, &scene, config.calibrate)?;
    if let Some(p) = &a.loss_csv {
        let mut s = String::from("iteration,loss\n");
        for (i, l) in report.losses.iter().enumerate() {
            s.push_str(&format!("{},{}\n", i + 1, l));
        }
        std::fs::write(p, s).map_err(|e| MixrtError::io(p, e))?;
    }
    let settings = RenderSettings {
        background: data.manifest.background,
        calibrate: config.calibrate,
        ..Default::default()
    };
    let test_psnr = if data.test.is_empty() {
        Value::Null
    } else {
        let v = evaluate(&scene, &data.test, &settings)?;
        json!(v.iter().sum::<f64>() / v.len() as f64)
    };
    Ok(json!({
        "command": "train",
        "out": a.out,
        "iterations": a.iterations,
        "rays": rays.len(),
        "final_loss": report.losses.last().copied(),
        "test_psnr": test_psnr,
        "seconds": t0.elapsed().as_secs_f64(),
    }))
}

fn parse_background(bg: &Option<Vec<f64>>, default: [f64; 3]) -> Result<[f64; 3]> {
    match bg {
        None => Ok(default),
        Some(v) if v.len() == 3 && v.iter().all(|c| (0.0..=1.0).contains(c)) => Ok([v[0], v[1], v[2]]),
        Some(_) => Err(MixrtError::Usage("--background takes three values in [0, 1]".into())),
    }
}

fn load_scene(checkpoint: &Option<PathBuf>, bundle: &Option<PathBuf>) -> Result<(MixrtScene, bool, Option<[f64; 3]>)> {
    match (checkpoint, bundle) {
        (Some(c), _) => {
            let (s, meta) = load_checkpoint(c)?;
            Ok((s, meta.calibrate, None))
        }
        (None, Some(b)) => {
            let imp = import_bundle(b)?;
            Ok((imp.scene, imp.manifest.calibrate, Some(imp.manifest.background)))
        }
        (None, None) => Err(MixrtError::Usage("need --checkpoint or --bundle".into())),
    }
}

fn render(a: &RenderArgs) -> Result<Value> {
    let (scene, calibrate, bundle_bg) = load_scene(&a.checkpoint, &a.bundle)?;
    let data = load_dataset(&a.dataset)?;
    let views: &[(Camera, Image)] = match a.split {
        SplitArg::Train => &data.train,
        SplitArg::Test => &data.test,
    };
    let selected: Vec<usize> = match a.index {
        Some(i) if i < views.len() => vec![i],
        Some(i) => return Err(MixrtError::Usage(format!("view {i} out of range ({} views)", views.len()))),
        None => (0..views.len()).collect(),
    };
    let settings = RenderSettings {
        background: parse_background(&a.background, bundle_bg.unwrap_or(data.manifest.background))?,
        mode: match a.mode {
            ModeArg::Mixrt => RenderMode::Mixrt,
            ModeArg::Volumetric => RenderMode::VolumetricReference,
        },
        samples_per_ray: a.samples,
        near: a.near,
        far: a.far,
        calibrate: calibrate && !a.no_calibrate,
    };
    std::fs::create_dir_all(&a.out).map_err(|e| MixrtError::io(&a.out, e))?;
    let mut psnrs = Vec::new();
    for i in &selected {
        let (cam, gt) = &views[*i];
        let img = render_parallel(&scene, cam, &settings)?;
        write_image(&a.out.join(format!("view_{i:03}.png")), &img)?;
        psnrs.push(psnr(&img, gt)?);
    }
    Ok(json!({
        "command": "render",
        "images": selected.len(),
        "out": a.out,
        "psnr": psnrs,
        "psnr_mean": psnrs.iter().sum::<f64>() / psnrs.len().max(1) as f64,
    }))
}

fn bench(a: &BenchArgs, seed: u64) -> Result<Value> {
    let (mesh, camera) = match &a.dataset {
        Some(d) => {
            let data = load_dataset(d)?;
            let cam = data
                .test
                .first()
                .or(data.train.first())
                .map(|v| v.0)
                .ok_or(mixrt_core::Error::EmptyDataset)?;
            (data.mesh, cam)
        }
        None => {
            let opts = SyntheticOptions::new(SceneKind::BoxRoom);
            let mesh = scene_mesh(&opts)?;
            let cam = Camera::look_at(
                mixrt_core::Vec3::new(0.05, -0.1, 0.02),
                mixrt_core::Vec3::new(1.0, 0.3, 0.1),
                mixrt_core::Vec3::new(0.0, 0.0, 1.0),
                60f64.to_radians(),
                a.width,
                a.height,
            )?;
            (mesh, cam)
        }
    };
    if a.table_size_log2 > 31 || a.table_sizes.iter().any(|t| *t > 31) {
        return Err(MixrtError::Usage("table sizes must be below 2^32".into()));
    }
    let maps = bench_maps(a.map_resolution, 2, seed)?;
    let opts = BenchOptions {
        frames: a.frames,
        seed,
        ..Default::default()
    };
    let mut rows = bench_levels(&mesh, &maps, &camera, &a.levels, 1 << a.table_size_log2, &opts)?;
    let sizes: Vec<u32> = a.table_sizes.iter().map(|k| 1u32 << k).collect();
    rows.extend(bench_table_sizes(&mesh, &maps, &camera, a.sweep_levels, &sizes, &opts)?);
    let csv = to_csv(&rows);
    match &a.out {
        Some(p) => std::fs::write(p, &csv).map_err(|e| MixrtError::io(p, e))?,
        None => {
            print!("{csv}");
            let _ = std::io::stdout().flush();
        }
    }
    Ok(json!({
        "command": "bench",
        "rows": rows.len(),
        "out": a.out,
        "ms_median": rows.iter().map(|r| r.ms_median).collect::<Vec<_>>(),
    }))
}

fn export(a: &ExportArgs) -> Result<Value> {
    let (scene, calibrate, bg, quant): (MixrtScene, bool, [f64; 3], Option<BundleQuant>) =
        match (&a.checkpoint, &a.bundle) {
            (Some(c), _) => {
                let (s, meta) = load_checkpoint(c)?;
                (s, meta.calibrate, [0.0; 3], None)
            }
            (None, Some(b)) => {
                let imp = import_bundle(b)?;
                (imp.scene, imp.manifest.calibrate, imp.manifest.background, Some(imp.quant))
            }
            (None, None) => return Err(MixrtError::Usage("need --checkpoint or --bundle".into())),
        };
    let background = parse_background(&a.background, bg)?;
    let report = export_bundle(&scene, &a.out, background, calibrate, quant.as_ref())?;
    Ok(json!({
        "command": "export",
        "out": report.path,
        "total_bytes": report.total_bytes,
        "files": report.files.iter().map(|(n, b)| json!({"file": n, "bytes": b})).collect::<Vec<_>>(),
    }))
}

fn info(path: &Path) -> Result<Value> {
    if path.join(MANIFEST_FILE).exists() {
        let imp = import_bundle(path)?;
        let m = &imp.manifest;
        return Ok(json!({
            "command": "info",
            "kind": "bundle",
            "format": m.format,
            "level_resolutions": m.level_resolutions,
            "texture": [m.hash.width, m.hash.height],
            "decoder_dims": m.decoder.dims,
            "map_resolution": m.displacement.resolution,
            "sh_degree": m.displacement.sh_degree,
            "vertices": m.mesh.vertices,
            "faces": m.mesh.faces,
        }));
    }
    if path.join("scene.json").exists() {
        let (s, meta) = load_checkpoint(path)?;
        return Ok(json!({
            "command": "info",
            "kind": "checkpoint",
            "grid": meta.grid,
            "decoder_dims": meta.decoder_dims,
            "map_resolution": meta.map_resolution,
            "sh_degree": meta.sh_degree,
            "calibrate": meta.calibrate,
            "vertices": s.mesh().vertex_count(),
            "faces": s.mesh().face_count(),
        }));
    }
    if path.join(CAMERAS_FILE).exists() {
        let m = read_manifest(path)?;
        return Ok(json!({
            "command": "info",
            "kind": "dataset",
            "scene": m.scene,
            "seed": m.seed,
            "view_offset": m.view_offset,
            "train_views": m.train.len(),
            "test_views": m.test.len(),
        }));
    }
    match path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref() {
        Some("png") => {
            let img = read_image(path)?;
            Ok(json!({"command": "info", "kind": "image", "width": img.width(), "height": img.height()}))
        }
        Some("glb") | Some("gltf") | Some("obj") => {
            let mesh = read_mesh(path)?;
            Ok(json!({
                "command": "info",
                "kind": "mesh",
                "vertices": mesh.vertex_count(),
                "faces": mesh.face_count(),
                "bounds": mesh.bounds().map(|(lo, hi)| [lo.to_array(), hi.to_array()]),
            }))
        }
        _ => {
            if path.exists() {
                Err(MixrtError::Usage(format!("{}: unrecognized input", path.display())))
            } else {
                Err(MixrtError::MissingFile { path: path.to_path_buf() })
            }
        }
    }
}
