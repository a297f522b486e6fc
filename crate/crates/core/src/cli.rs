//! Command line front end.
//!
//! Settings resolve as: flag, then environment variable, then config file,
//! then built-in default.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dataset::{self, BuildConfig, Manifest};
use crate::error::{Error, Result};
use crate::fixture;
use crate::head::{self, CharacterDescriptor};
use crate::mapping::{self, FittedBasis, LandmarkModel, DEFAULT_BASIS_SEED, DEFAULT_LAMBDA};
use crate::metrics::{self, SsimConfig};
use crate::pose::{self, PoseGroup, PoseVector, TargetMorph};
use crate::sampler::{self, MorphAvailability};

pub const OUT_DIR_ENV: &str = "POSEKIT_OUT_DIR";

#[derive(Debug, Parser)]
#[command(name = "posekit", version, about = "Synthetic cartoon-head datasets and pose-vector mapping")]
pub struct Cli {
    /// TOML file with default settings.
    #[arg(long, global = true, env = "POSEKIT_CONFIG")]
    pub config: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Draw pose vectors for a character's available morphs.
    SamplePoses(SamplePosesArgs),
    /// Render one pose of a synthetic character to PNG.
    Render(RenderArgs),
    /// Fit the expression-to-basis table Φ.
    FitBasis(FitBasisArgs),
    /// Map pose vectors to 70-dim parameters with a fitted Φ.
    MapPose(MapPoseArgs),
    /// Evenly spaced poses strictly between two poses.
    Interpolate(InterpolateArgs),
    /// Render a dataset and write its manifest.
    BuildDataset(BuildDatasetArgs),
    /// Summarize a manifest.
    Stats(StatsArgs),
    /// Split a manifest into train and test sets by model.
    Split(SplitArgs),
    /// Structural similarity between image pairs.
    Ssim(SsimArgs),
    /// Head-angle error between predicted and target angles.
    Hae(HaeArgs),
    /// Serve the annotation API over a catalog directory.
    AnnotateServe(ServeArgs),
    /// Write a synthetic source-morph catalog with rendered previews.
    FixtureCatalog(FixtureCatalogArgs),
}

#[derive(Debug, Args)]
pub struct SamplePosesArgs {
    #[arg(long)]
    pub seed: Option<u64>,
    /// Available target morphs: `all`, `none`, or comma-separated ids.
    #[arg(long, default_value = "all")]
    pub morphs: String,
    /// Number of draws (default: the count policy for the morph set).
    #[arg(long)]
    pub count: Option<usize>,
    /// Which group(s) to emit per draw.
    #[arg(long, value_enum, default_value_t = GroupArg::Both)]
    pub group: GroupArg,
    #[arg(long, short)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum GroupArg {
    Frontal,
    Rotated,
    Both,
}

#[derive(Debug, Args)]
pub struct RenderArgs {
    /// Character seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Pose CSV file; `--row` selects the line.
    #[arg(long)]
    pub pose: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub row: usize,
    #[arg(long)]
    pub shader: Option<u8>,
    #[arg(long)]
    pub resolution: Option<u32>,
    #[arg(long, short)]
    pub out: PathBuf,
    /// Also write projected landmarks (TSV, pixels).
    #[arg(long)]
    pub landmarks: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct FitBasisArgs {
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub basis_seed: Option<u64>,
    /// Landmark basis TSV to use instead of the synthetic one.
    #[arg(long)]
    pub basis: Option<PathBuf>,
    #[arg(long, short)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct MapPoseArgs {
    #[arg(long)]
    pub phi: PathBuf,
    #[arg(long)]
    pub pose: PathBuf,
    #[arg(long, short)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct InterpolateArgs {
    #[arg(long)]
    pub from: PathBuf,
    #[arg(long)]
    pub to: PathBuf,
    #[arg(long)]
    pub steps: usize,
    #[arg(long, short)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BuildDatasetArgs {
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub characters: Option<usize>,
    /// Shader ids, comma-separated (1 flat, 2 toon, 3 sketch, 4 gradient).
    #[arg(long, value_delimiter = ',')]
    pub shaders: Option<Vec<u8>>,
    #[arg(long)]
    pub resolution: Option<u32>,
    #[arg(long)]
    pub support_probability: Option<f64>,
    /// Include 70-dim mapped poses in the manifest.
    #[arg(long)]
    pub mapped: bool,
    /// Annotated catalog directory (availability from inspected records).
    #[arg(long)]
    pub catalog: Option<PathBuf>,
    #[arg(long)]
    pub min_models: Option<usize>,
    #[arg(long)]
    pub phi: Option<PathBuf>,
    #[arg(long, short, env = OUT_DIR_ENV)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct StatsArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long, value_enum, default_value_t = GroupArg::Both)]
    pub group: GroupArg,
    #[arg(long, short)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SplitArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub train_fraction: f64,
    /// Output directory for `train.jsonl` and `test.jsonl` (default: next to the manifest).
    #[arg(long, short)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SsimArgs {
    /// Image pairs: A1 B1 [A2 B2 ...].
    #[arg(required = true, num_args = 2..)]
    pub images: Vec<PathBuf>,
    #[arg(long)]
    pub window: Option<usize>,
    #[arg(long)]
    pub sigma: Option<f64>,
}

#[derive(Debug, Args)]
pub struct HaeArgs {
    /// CSV of predicted angles (3 columns) or poses (20 columns).
    #[arg(long)]
    pub predicted: PathBuf,
    #[arg(long)]
    pub target: PathBuf,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long)]
    pub catalog: PathBuf,
    #[arg(long)]
    pub addr: Option<std::net::SocketAddr>,
    #[arg(long)]
    pub min_models: Option<usize>,
    #[arg(long)]
    pub annotator: Option<String>,
}

#[derive(Debug, Args)]
pub struct FixtureCatalogArgs {
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, default_value_t = 10)]
    pub models: usize,
    #[arg(long)]
    pub support_probability: Option<f64>,
    #[arg(long)]
    pub resolution: Option<u32>,
    #[arg(long, short, env = OUT_DIR_ENV)]
    pub out: Option<PathBuf>,
}

/// Config file contents. Every field is optional.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub seed: Option<u64>,
    pub jobs: Option<usize>,
    pub out_dir: Option<PathBuf>,
    pub dataset: Option<BuildConfig>,
    pub mapping: MappingConfig,
    pub ssim: Option<SsimConfig>,
    pub service: ServiceFileConfig,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MappingConfig {
    pub lambda: Option<f64>,
    pub basis_seed: Option<u64>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServiceFileConfig {
    pub addr: Option<std::net::SocketAddr>,
    pub min_models: Option<usize>,
    pub annotator: Option<String>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        toml::from_str(&text).map_err(|e| Error::format(path, e.to_string()))
    }
}

/// Parses `args` and runs the command; returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn execute(cli: Cli) -> Result<()> {
    let file = match &cli.config {
        Some(p) => FileConfig::load(p)?,
        None => FileConfig::default(),
    };
    let jobs = cli.jobs.or(file.jobs);
    if jobs == Some(0) {
        return Err(Error::invalid("--jobs must be at least 1"));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.unwrap_or(0))
        .build()
        .map_err(|e| Error::invalid(format!("thread pool: {e}")))?;
    pool.install(|| dispatch(cli.command, &file))
}

fn require_seed(flag: Option<u64>, file: &FileConfig) -> Result<u64> {
    flag.or(file.seed).ok_or_else(|| Error::invalid("--seed is required (or set `seed` in the config file)"))
}

fn out_dir(flag: Option<PathBuf>, file: &FileConfig) -> Result<PathBuf> {
    flag.or_else(|| file.out_dir.clone())
        .ok_or_else(|| Error::invalid(format!("--out is required (or set {OUT_DIR_ENV} or `out_dir`)")))
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => {
            if let Some(parent) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
            }
            fs::write(p, text).map_err(|e| Error::io(p, e))
        }
        None => std::io::stdout().lock().write_all(text.as_bytes()).map_err(|e| Error::io("<stdout>", e)),
    }
}

fn read_rows(path: &Path) -> Result<Vec<Vec<f64>>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty() && !l.starts_with('#'))
        .map(|(n, l)| {
            l.split(',')
                .map(|v| {
                    v.trim().parse::<f64>().map_err(|e| Error::format(path, format!("line {}: {v:?}: {e}", n + 1)))
                })
                .collect()
        })
        .collect()
}

/// Reads a pose CSV: one 20-value row per line, `#` comments allowed.
pub fn read_poses(path: &Path) -> Result<Vec<PoseVector>> {
    read_rows(path)?
        .into_iter()
        .enumerate()
        .map(|(i, r)| PoseVector::from_slice(&r).map_err(|e| Error::format(path, format!("row {}: {e}", i + 1))))
        .collect()
}

fn poses_csv(poses: &[PoseVector]) -> String {
    poses.iter().map(|p| p.to_csv_row() + "\n").collect()
}

fn parse_morphs(spec: &str) -> Result<Vec<TargetMorph>> {
    match spec.trim() {
        "all" => Ok(TargetMorph::all().collect()),
        "none" | "" => Ok(Vec::new()),
        list => list
            .split(',')
            .map(|s| {
                let id: u8 = s.trim().parse().map_err(|_| Error::invalid(format!("bad morph id {s:?}")))?;
                TargetMorph::from_id(id)
            })
            .collect(),
    }
}

fn dispatch(cmd: Command, file: &FileConfig) -> Result<()> {
    match cmd {
        Command::SamplePoses(a) => {
            let seed = require_seed(a.seed, file)?;
            let avail = MorphAvailability::new(parse_morphs(&a.morphs)?, seed);
            let count = match a.count {
                Some(c) => c,
                None => sampler::sample_count(avail.len() as i64)?,
            };
            let mut poses = Vec::new();
            for draw in 0..count as u64 {
                let (front, rot) = sampler::sample_pair(&avail, draw);
                match a.group {
                    GroupArg::Frontal => poses.push(front),
                    GroupArg::Rotated => poses.push(rot),
                    GroupArg::Both => poses.extend([front, rot]),
                }
            }
            emit(a.out.as_deref(), &poses_csv(&poses))
        }
        Command::Render(a) => {
            let seed = require_seed(a.seed, file)?;
            let ds = file.dataset.clone().unwrap_or_default();
            let pose = match &a.pose {
                Some(p) => *read_poses(p)?
                    .get(a.row)
                    .ok_or_else(|| Error::invalid(format!("--row {} is past the end of {}", a.row, p.display())))?,
                None => PoseVector::neutral(),
            };
            let ch = CharacterDescriptor::generate(seed, ds.support_probability);
            let shader = a.shader.unwrap_or(ds.shaders.first().copied().unwrap_or(1));
            let frame = head::render(&ch, &pose, shader, a.resolution.unwrap_or(ds.resolution))?;
            if let Some(parent) = a.out.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
            }
            fixture::save_png(&frame.image, &a.out)?;
            if let Some(lm) = &a.landmarks {
                emit(Some(lm), &head::landmark_table(&frame.landmarks))?;
            }
            Ok(())
        }
        Command::FitBasis(a) => {
            let lambda = a.lambda.or(file.mapping.lambda).unwrap_or(DEFAULT_LAMBDA);
            let basis_seed = a.basis_seed.or(file.mapping.basis_seed).unwrap_or(DEFAULT_BASIS_SEED);
            let (model, rules) = LandmarkModel::for_character(&CharacterDescriptor::canonical(), lambda, basis_seed)?;
            let model = match &a.basis {
                Some(p) => LandmarkModel::load_basis(p, lambda)?,
                None => model,
            };
            let phi = mapping::build_phi(&model, &rules)?;
            phi.save(&a.out)?;
            let worst = phi
                .residuals
                .iter()
                .zip(&phi.target_norms)
                .map(|(r, t)| if *t > 0.0 { r / t } else { 0.0 })
                .fold(0.0, f64::max);
            println!("phi_hash\t{}\nmax_relative_residual\t{worst:.6e}", phi.hash());
            Ok(())
        }
        Command::MapPose(a) => {
            let phi = FittedBasis::load(&a.phi)?;
            let poses = read_poses(&a.pose)?;
            for (i, p) in poses.iter().enumerate() {
                let report = pose::validate(p)?;
                if let Some(v) = report.violations.iter().find(|v| matches!(v, pose::Violation::ExprOutOfRange { .. }))
                {
                    return Err(Error::invalid(format!("pose row {}: {v:?}", i + 1)));
                }
            }
            let rows: String = poses.iter().map(|p| mapping::map_pose_vector(p, &phi).to_csv_row() + "\n").collect();
            emit(a.out.as_deref(), &rows)
        }
        Command::Interpolate(a) => {
            let from = single_pose(&a.from)?;
            let to = single_pose(&a.to)?;
            emit(a.out.as_deref(), &poses_csv(&pose::interpolate(&from, &to, a.steps)?))
        }
        Command::BuildDataset(a) => {
            let mut cfg = file.dataset.clone().unwrap_or_default();
            cfg.seed = require_seed(a.seed, file)?;
            if let Some(v) = a.characters {
                cfg.characters = v;
            }
            if let Some(v) = a.shaders {
                cfg.shaders = v;
            }
            if let Some(v) = a.resolution {
                cfg.resolution = v;
            }
            if let Some(v) = a.support_probability {
                cfg.support_probability = v;
            }
            cfg.include_mapped |= a.mapped;
            if a.catalog.is_some() {
                cfg.catalog = a.catalog;
            }
            if let Some(v) = a.min_models {
                cfg.min_models = v;
            }
            if a.phi.is_some() {
                cfg.phi = a.phi;
            }
            let out = out_dir(a.out, file)?;
            let manifest = dataset::build(&cfg, &out)?;
            let hash = hex::encode(Sha256::digest(manifest.to_jsonl().as_bytes()));
            println!(
                "manifest\t{}\nrecords\t{}\nmanifest_sha256\t{hash}",
                out.join(dataset::MANIFEST_FILE).display(),
                manifest.records.len()
            );
            Ok(())
        }
        Command::Stats(a) => {
            let m = Manifest::load(&a.manifest)?;
            let records: Vec<_> = m
                .records
                .into_iter()
                .filter(|r| match a.group {
                    GroupArg::Both => true,
                    GroupArg::Frontal => r.group == PoseGroup::FrontalizedExpression,
                    GroupArg::Rotated => r.group == PoseGroup::RotatedExpression,
                })
                .collect();
            let s = dataset::stats(&records);
            emit(a.out.as_deref(), &(serde_json::to_string_pretty(&s).expect("stats serialize") + "\n"))
        }
        Command::Split(a) => {
            let m = Manifest::load(&a.manifest)?;
            let (train, test) = dataset::split(&m, a.train_fraction)?;
            let dir = match a.out {
                Some(d) => d,
                None => a.manifest.parent().map(Path::to_path_buf).unwrap_or_default(),
            };
            fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
            train.save(&dir.join("train.jsonl"))?;
            test.save(&dir.join("test.jsonl"))?;
            println!(
                "train\t{}\t{}\ntest\t{}\t{}",
                train.header.models,
                train.records.len(),
                test.header.models,
                test.records.len()
            );
            Ok(())
        }
        Command::Ssim(a) => {
            if a.images.len() % 2 != 0 {
                return Err(Error::invalid("ssim needs image pairs"));
            }
            let mut cfg = file.ssim.unwrap_or_default();
            if let Some(w) = a.window {
                cfg.window = w;
            }
            if let Some(s) = a.sigma {
                cfg.sigma = s;
            }
            cfg.check()?;
            let mut out = String::new();
            let mut total = 0.0;
            for pair in a.images.chunks(2) {
                let x = load_rgba(&pair[0])?;
                let y = load_rgba(&pair[1])?;
                let v = metrics::ssim(&x, &y, &cfg)?;
                total += v;
                out.push_str(&format!("{}\t{}\t{v}\n", pair[0].display(), pair[1].display()));
            }
            out.push_str(&format!("mean\t\t{}\n", total / (a.images.len() / 2) as f64));
            emit(None, &out)
        }
        Command::Hae(a) => {
            let p = read_angles(&a.predicted)?;
            let t = read_angles(&a.target)?;
            if p.len() != t.len() || p.is_empty() {
                return Err(Error::invalid(format!("row counts differ or are zero: {} vs {}", p.len(), t.len())));
            }
            let mut out = String::new();
            let mut total = 0.0;
            for (i, (x, y)) in p.iter().zip(&t).enumerate() {
                let e = metrics::head_angle_error(x, y);
                total += e;
                out.push_str(&format!("{i}\t{e}\n"));
            }
            out.push_str(&format!("mean\t{}\n", total / p.len() as f64));
            emit(None, &out)
        }
        Command::AnnotateServe(a) => serve(a, file),
        Command::FixtureCatalog(a) => {
            let seed = require_seed(a.seed, file)?;
            let ds = file.dataset.clone().unwrap_or_default();
            let out = out_dir(a.out, file)?;
            let fx = fixture::write_fixture(
                &out,
                a.models,
                seed,
                a.support_probability.unwrap_or(ds.support_probability),
                a.resolution.unwrap_or(ds.resolution),
            )?;
            println!("models\t{}\nnames\t{}", fx.catalog.models.len(), fx.truth.len());
            Ok(())
        }
    }
}

fn single_pose(path: &Path) -> Result<PoseVector> {
    let poses = read_poses(path)?;
    match poses.as_slice() {
        [p] => Ok(*p),
        _ => Err(Error::format(path, format!("expected exactly one pose row, found {}", poses.len()))),
    }
}

fn read_angles(path: &Path) -> Result<Vec<[f64; 3]>> {
    read_rows(path)?
        .into_iter()
        .enumerate()
        .map(|(i, r)| match r.len() {
            3 => Ok([r[0], r[1], r[2]]),
            pose::POSE_DIM => Ok([r[17], r[18], r[19]]),
            n => Err(Error::format(path, format!("row {}: expected 3 or 20 values, got {n}", i + 1))),
        })
        .collect()
}

fn load_rgba(path: &Path) -> Result<image::RgbaImage> {
    image::open(path).map(|i| i.to_rgba8()).map_err(|e| match e {
        image::ImageError::IoError(io) => Error::io(path, io),
        other => Error::format(path, other.to_string()),
    })
}

#[cfg(feature = "serve")]
fn serve(a: ServeArgs, file: &FileConfig) -> Result<()> {
    use crate::service::{self, ServiceConfig};
    let cfg = ServiceConfig {
        catalog_dir: a.catalog,
        addr: a.addr.or(file.service.addr).unwrap_or_else(|| ([127, 0, 0, 1], 8080).into()),
        min_models: a.min_models.or(file.service.min_models).unwrap_or(crate::catalog::DEFAULT_MIN_MODELS),
        annotator: a.annotator.or_else(|| file.service.annotator.clone()).unwrap_or_else(|| "annotator".into()),
    };
    let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build().map_err(|e| Error::io("<runtime>", e))?;
    rt.block_on(async {
        let bound = service::bind(&cfg).await?;
        eprintln!(
            "serving {} on http://{}",
            cfg.catalog_dir.display(),
            bound.local_addr().map_err(|e| Error::io("<listener>", e))?
        );
        bound
            .run(async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await
    })
}

#[cfg(not(feature = "serve"))]
fn serve(_: ServeArgs, _: &FileConfig) -> Result<()> {
    Err(Error::invalid("built without the `serve` feature"))
}
