//! Command line: one subcommand per pipeline stage, all sharing a scene
//! directory layout.
//!
//! ```text
//! points.ply            input cloud (synth also writes points_truth.ply)
//! cameras.txt           frames
//! depth/<id>.depth      per-frame depth, raw or .png
//! masks/<id>.mask       per-frame class masks, raw or .png
//! taxonomy.csv          optional class table
//! selected.txt          select-frames
//! labeled.ply           lift-labels
//! scene_grid.toml, scene.label   densify
//! samples/              sample-gt
//! ```

use std::collections::BTreeSet;
use std::ffi::OsString;
use std::fs::{self, File, OpenOptions};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::{info, warn};
use rayon::prelude::*;

use crate::densify::pipeline::{densify_scene, scene_grid_for};
use crate::error::{Error, Result};
use crate::geometry::CameraFrame;
use crate::gt::sample_frame;
use crate::io::config::PipelineConfig;
use crate::io::ply::{read_point_cloud, write_point_cloud, PlyFormat};
use crate::io::raster::{read_depth, read_mask, write_bool_png, write_depth, write_mask};
use crate::io::sample::{list_samples, read_sample, write_sample};
use crate::io::scene::{read_scene_grid, write_scene_grid, SCENE_META};
use crate::io::{read_cameras, read_text, write_bytes, write_cameras};
use crate::lifting::{lift_labels, SemanticPointCloud};
use crate::raster::{DepthMap, SemanticMask};
use crate::selection::{compute_correspondences, coverage, stratified_select, CorrespondenceSet};
use crate::synth::{generate_scene, SynthSceneSpec};
use crate::taxonomy::{Taxonomy, EMPTY};
use crate::validate::{check_sample, self_test};

pub const POINTS: &str = "points.ply";
pub const POINTS_TRUTH: &str = "points_truth.ply";
pub const CAMERAS: &str = "cameras.txt";
pub const TAXONOMY: &str = "taxonomy.csv";
pub const SELECTED: &str = "selected.txt";
pub const LABELED: &str = "labeled.ply";
pub const SAMPLES: &str = "samples";
pub const LOCK: &str = ".aerovox.lock";

#[derive(Debug, Parser)]
#[command(name = "aerovox", version, about = "Semantic occupancy ground truth from aerial point clouds")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Pipeline configuration (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads; defaults to all cores.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Write intermediate images such as carving silhouettes.
    #[arg(long, global = true)]
    debug_artifacts: bool,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Preset {
    Block,
    Small,
}

#[derive(Debug, Args)]
struct StageArgs {
    /// Scene directory holding the stage inputs.
    #[arg(long)]
    scene: PathBuf,
    /// Output directory; defaults to the scene directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl StageArgs {
    fn out(&self) -> &Path {
        self.out.as_deref().unwrap_or(&self.scene)
    }
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic scene with cameras, depth maps and masks.
    Synth {
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value_t = Preset::Block)]
        preset: Preset,
    },
    /// Pick annotation frames and report their point coverage.
    SelectFrames(StageArgs),
    /// Transfer the selected masks to the point cloud.
    LiftLabels(StageArgs),
    /// Build the dense scene voxel grid from the labeled cloud.
    Densify(StageArgs),
    /// Cut per-frame samples with their masks from the scene grid.
    SampleGt(StageArgs),
    /// Check sample masks and labels against their invariants.
    Validate(StageArgs),
    /// Per-class voxel counts of the scene grid as CSV.
    Stats(StageArgs),
}

/// Run the command line and return the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 3 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::new().filter_or("AEROVOX_LOG", "warn")).try_init();
    match dispatch(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn dispatch(cli: &Cli) -> Result<()> {
    match cli.threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::Config(e.to_string()))?
            .install(|| execute(cli)),
        None => execute(cli),
    }
}

fn execute(cli: &Cli) -> Result<()> {
    let cfg = match &cli.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    match &cli.command {
        Command::Synth { seed, out, preset } => locked(out, || synth(out, *seed, *preset)),
        Command::SelectFrames(a) => locked(a.out(), || select_frames(&cfg, &a.scene, a.out())),
        Command::LiftLabels(a) => locked(a.out(), || lift(&cfg, &a.scene, a.out())),
        Command::Densify(a) => locked(a.out(), || densify(&cfg, &a.scene, a.out(), cli.debug_artifacts)),
        Command::SampleGt(a) => locked(a.out(), || sample_gt(&cfg, &a.scene, a.out())),
        Command::Validate(a) => validate(&cfg, &a.scene),
        Command::Stats(a) => stats(&cfg, &a.scene, a.out.as_deref()),
    }
}

/// Hold an exclusive lock file in `out` while `f` runs.
fn locked<T>(out: &Path, f: impl FnOnce() -> Result<T>) -> Result<T> {
    struct Guard(PathBuf);
    impl Drop for Guard {
        fn drop(&mut self) {
            let _ = fs::remove_file(&self.0);
        }
    }
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let path = out.join(LOCK);
    let _file: File = OpenOptions::new().write(true).create_new(true).open(&path).map_err(|e| Error::io(&path, e))?;
    let _guard = Guard(path);
    f()
}

/// Taxonomy from the config, else the scene's `taxonomy.csv`, else built in.
fn taxonomy(cfg: &PipelineConfig, scene: &Path) -> Result<Taxonomy> {
    if cfg.taxonomy.is_some() {
        return cfg.taxonomy();
    }
    let path = scene.join(TAXONOMY);
    if path.exists() {
        return Taxonomy::parse(&read_text(&path)?).map_err(|e| Error::format(&path, e.to_string()));
    }
    Ok(Taxonomy::aerial())
}

fn raster_path(scene: &Path, sub: &str, id: u32, ext: &str) -> PathBuf {
    let raw = scene.join(sub).join(format!("{id:06}.{ext}"));
    if raw.exists() {
        return raw;
    }
    let png = raw.with_extension("png");
    if png.exists() {
        png
    } else {
        raw
    }
}

fn load_depth(scene: &Path, id: u32) -> Result<DepthMap> {
    read_depth(&raster_path(scene, "depth", id, "depth"))
}

fn load_mask(scene: &Path, id: u32) -> Result<SemanticMask> {
    Ok(SemanticMask { frame_id: id, labels: read_mask(&raster_path(scene, "masks", id, "mask"))? })
}

fn read_selected(path: &Path) -> Result<BTreeSet<u32>> {
    let mut ids = BTreeSet::new();
    for line in read_text(path)?.lines() {
        let line = line.split('#').next().unwrap_or("").trim();
        if !line.is_empty() {
            ids.insert(line.parse().map_err(|_| Error::format(path, format!("bad frame id {line}")))?);
        }
    }
    Ok(ids)
}

fn selected_frames(scene: &Path, frames: &[CameraFrame]) -> Result<Vec<CameraFrame>> {
    let path = scene.join(SELECTED);
    if !path.exists() {
        warn!("no {SELECTED}, using all frames");
        return Ok(frames.to_vec());
    }
    let ids = read_selected(&path)?;
    for id in &ids {
        if !frames.iter().any(|f| f.id == *id) {
            return Err(Error::UnknownFrame(*id));
        }
    }
    Ok(frames.iter().filter(|f| ids.contains(&f.id)).copied().collect())
}

fn correspondences(cfg: &PipelineConfig, scene: &Path, points: &SemanticPointCloud, frames: &[CameraFrame]) -> Result<Vec<CorrespondenceSet>> {
    let tol = cfg.depth_tolerance();
    frames
        .par_iter()
        .map(|f| compute_correspondences(&points.positions, f, &load_depth(scene, f.id)?, tol))
        .collect()
}

fn synth(out: &Path, seed: u64, preset: Preset) -> Result<()> {
    let tax = Taxonomy::aerial();
    let spec = match preset {
        Preset::Block => SynthSceneSpec::aerial_block(seed, &tax),
        Preset::Small => SynthSceneSpec::small(seed, &tax),
    };
    let scene = generate_scene(&spec)?;
    let unlabeled = SemanticPointCloud::unlabeled(scene.cloud.positions.clone());
    write_point_cloud(&out.join(POINTS), &unlabeled, PlyFormat::BinaryLittleEndian, false)?;
    write_point_cloud(&out.join(POINTS_TRUTH), &scene.cloud, PlyFormat::BinaryLittleEndian, true)?;
    write_cameras(&out.join(CAMERAS), &scene.frames)?;
    write_bytes(&out.join(TAXONOMY), tax.to_text().as_bytes())?;
    scene.frames.par_iter().zip(&scene.depths).zip(&scene.masks).try_for_each(|((f, d), m)| {
        write_depth(&out.join("depth").join(format!("{:06}.depth", f.id)), d)?;
        write_mask(&out.join("masks").join(format!("{:06}.mask", f.id)), &m.labels)
    })?;
    println!("synth: {} points, {} frames", scene.cloud.len(), scene.frames.len());
    Ok(())
}

fn select_frames(cfg: &PipelineConfig, scene: &Path, out: &Path) -> Result<()> {
    let points = read_point_cloud(&scene.join(POINTS))?;
    let frames = read_cameras(&scene.join(CAMERAS))?;
    let sets = correspondences(cfg, scene, &points, &frames)?;
    let selected = stratified_select(&frames, cfg.cell_size_m)?;
    let cov = coverage(&sets, &selected, points.len())?;
    let mut text = format!("# frames {} selected {} coverage {cov}\n", frames.len(), selected.len());
    for id in &selected {
        text.push_str(&format!("{id}\n"));
    }
    write_bytes(&out.join(SELECTED), text.as_bytes())?;
    println!("select-frames: {} of {} frames, coverage {cov:.4}", selected.len(), frames.len());
    Ok(())
}

fn lift(cfg: &PipelineConfig, scene: &Path, out: &Path) -> Result<()> {
    let tax = taxonomy(cfg, scene)?;
    let points = read_point_cloud(&scene.join(POINTS))?;
    let frames = selected_frames(scene, &read_cameras(&scene.join(CAMERAS))?)?;
    let sets = correspondences(cfg, scene, &points, &frames)?;
    let masks = frames.iter().map(|f| load_mask(scene, f.id)).collect::<Result<Vec<_>>>()?;
    let labeled = lift_labels(&points.positions, &masks, &sets, &tax, cfg.lift_params())?;
    write_point_cloud(&out.join(LABELED), &labeled, PlyFormat::BinaryLittleEndian, true)?;
    println!("lift-labels: {} points from {} frames", labeled.len(), frames.len());
    Ok(())
}

fn densify(cfg: &PipelineConfig, scene: &Path, out: &Path, debug: bool) -> Result<()> {
    let tax = taxonomy(cfg, scene)?;
    let cloud = read_point_cloud(&scene.join(LABELED))?;
    let grid = scene_grid_for(&cloud.positions, cfg.voxel_size_m, cfg.scene_pad_m)?;
    let mut params = cfg.densify_params(&tax)?;
    params.keep_views = debug;
    let result = densify_scene(&cloud, &tax, &grid, &params)?;
    write_scene_grid(out, &result.scene)?;
    if debug {
        let dir = out.join("debug").join("silhouettes");
        for (cluster, views) in result.clusters.iter().zip(&result.views) {
            for (i, v) in views.iter().enumerate() {
                write_bool_png(&dir.join(format!("c{:04}_v{i:02}.png", cluster.id)), &v.silhouette)?;
            }
        }
    }
    let r = &result.report;
    info!("densify report: {r:?}");
    println!(
        "densify: {} occupied voxels, {} clusters, {} noise points",
        result.scene.occupied(),
        r.clusters,
        r.noise_points
    );
    Ok(())
}

fn sample_gt(cfg: &PipelineConfig, scene: &Path, out: &Path) -> Result<()> {
    let grid = read_scene_grid(scene)?;
    let params = cfg.gt_params()?;
    let frames = selected_frames(scene, &read_cameras(&scene.join(CAMERAS))?)?;
    let frames: Vec<CameraFrame> = frames.into_iter().step_by(cfg.sample_frame_stride).collect();
    if frames.is_empty() {
        return Err(Error::InvalidInput("no frames to sample".into()));
    }
    let dir = out.join(SAMPLES);
    frames.par_iter().try_for_each(|f| write_sample(&sample_frame(&grid, f, &params)?, &dir))?;
    println!("sample-gt: {} samples", frames.len());
    Ok(())
}

fn validate(cfg: &PipelineConfig, scene: &Path) -> Result<()> {
    self_test()?;
    let tax = taxonomy(cfg, scene)?;
    let params = cfg.gt_params()?;
    let frames = read_cameras(&scene.join(CAMERAS))?;
    let grid = if scene.join(SCENE_META).exists() { Some(read_scene_grid(scene)?) } else { None };
    let dir = scene.join(SAMPLES);
    let ids = list_samples(&dir)?;
    if ids.is_empty() {
        return Err(Error::InvalidInput(format!("no samples in {}", dir.display())));
    }
    let violations = ids
        .par_iter()
        .map(|&id| {
            let frame = frames.iter().find(|f| f.id == id).ok_or(Error::UnknownFrame(id))?;
            let sample = read_sample(&dir, id, &params.spec)?;
            check_sample(&sample, frame, &params, &tax, grid.as_ref())
        })
        .collect::<Result<Vec<_>>>()?
        .concat();
    if let Some(first) = violations.first() {
        for v in &violations {
            eprintln!("violation: {v}");
        }
        return Err(Error::Invariant(format!("{} ({} violations in total)", first, violations.len())));
    }
    println!("validate: {} samples ok", ids.len());
    Ok(())
}

/// `id,name,group,voxels,frequency_pct` over the occupied scene voxels.
pub fn stats_csv(labels: &[u16], tax: &Taxonomy) -> Result<String> {
    let mut counts = std::collections::BTreeMap::new();
    for &c in labels.iter().filter(|&&c| c != EMPTY) {
        if !tax.contains(c) {
            return Err(Error::Invariant(format!("scene label {c} not in taxonomy")));
        }
        *counts.entry(c).or_insert(0usize) += 1;
    }
    let total: usize = counts.values().sum();
    let mut out = String::from("id,name,group,voxels,frequency_pct\n");
    for c in tax.classes() {
        let n = counts.get(&c.id).copied().unwrap_or(0);
        let pct = if total == 0 { 0.0 } else { 100.0 * n as f64 / total as f64 };
        let g = c.group.map_or("-", |g| g.name());
        out.push_str(&format!("{},{},{g},{n},{pct:.4}\n", c.id, c.name));
    }
    Ok(out)
}

fn stats(cfg: &PipelineConfig, scene: &Path, out: Option<&Path>) -> Result<()> {
    let tax = taxonomy(cfg, scene)?;
    let grid = read_scene_grid(scene)?;
    let csv = stats_csv(grid.labels(), &tax)?;
    match out {
        Some(dir) => write_bytes(&dir.join("stats.csv"), csv.as_bytes())?,
        None => print!("{csv}"),
    }
    Ok(())
}
