//! End-to-end dataset build: characters → pose draws → renders → manifest.
//!
//! The manifest is JSON lines: a header line followed by one record per
//! image, sorted by (model id, draw index, group, shader).

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::catalog::{AnnotationStore, DEFAULT_MIN_MODELS, LOG_FILE};
use crate::error::{Error, Result};
use crate::fixture;
use crate::head::{self, CharacterDescriptor, Shader};
use crate::mapping::{self, FittedBasis, LandmarkModel, MappedPose};
use crate::pose::{self, PoseGroup, PoseVector, ANGLE_DIM, SAMPLER_ANGLE_LIMIT};
use crate::rng::derive_seed;
use crate::sampler::{sample_count, sample_pair, MorphAvailability};

pub const PIPELINE_VERSION: &str = concat!("posekit/", env!("CARGO_PKG_VERSION"));
pub const COUNTS_POLICY: &str = "per_shader_per_group";
pub const MANIFEST_FILE: &str = "manifest.jsonl";
pub const PHI_FILE: &str = "phi.tsv";
pub const HISTOGRAM_BINS: usize = 8;

/// Everything that determines a build's output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BuildConfig {
    /// Number of synthetic characters (ignored in catalog mode).
    pub characters: usize,
    pub shaders: Vec<u8>,
    pub seed: u64,
    pub resolution: u32,
    /// Per-morph support probability of synthetic characters.
    pub support_probability: f64,
    pub include_mapped: bool,
    /// Annotated catalog directory; when set, availability comes from its
    /// inspected records instead of the character descriptors.
    pub catalog: Option<PathBuf>,
    pub min_models: usize,
    /// Pre-fitted Φ table; the default landmark model is fitted when unset.
    pub phi: Option<PathBuf>,
}

impl Default for BuildConfig {
    fn default() -> Self {
        Self {
            characters: 10,
            shaders: vec![1],
            seed: 0,
            resolution: head::DEFAULT_RESOLUTION,
            support_probability: 0.75,
            include_mapped: false,
            catalog: None,
            min_models: DEFAULT_MIN_MODELS,
            phi: None,
        }
    }
}

impl BuildConfig {
    pub fn check(&self) -> Result<()> {
        if self.shaders.is_empty() {
            return Err(Error::invalid("at least one shader is required"));
        }
        let mut seen = BTreeSet::new();
        for &s in &self.shaders {
            Shader::try_from(s)?;
            if !seen.insert(s) {
                return Err(Error::invalid(format!("shader {s} listed twice")));
            }
        }
        head::check_resolution(self.resolution)?;
        if !(0.0..=1.0).contains(&self.support_probability) {
            return Err(Error::invalid("support probability must lie in [0, 1]"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestHeader {
    pub pipeline_version: String,
    pub seed: u64,
    pub shaders: Vec<u8>,
    pub resolution: u32,
    pub counts_policy: String,
    pub phi_hash: Option<String>,
    pub models: usize,
    pub records: usize,
    pub config: BuildConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestRecord {
    pub model_id: String,
    /// Relative to the manifest directory.
    pub image: String,
    pub group: PoseGroup,
    pub shader: u8,
    pub pose: PoseVector,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mapped: Option<MappedPose>,
    pub character_seed: u64,
    pub draw_index: u64,
    /// Number of target morphs available to the character.
    pub morph_count: usize,
    pub pixel_hash: String,
}

impl ManifestRecord {
    fn sort_key(&self) -> (&str, u64, PoseGroup, u8) {
        (&self.model_id, self.draw_index, self.group, self.shader)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Manifest {
    pub header: ManifestHeader,
    pub records: Vec<ManifestRecord>,
}

impl Manifest {
    pub fn to_jsonl(&self) -> String {
        let mut s = serde_json::to_string(&self.header).expect("header serializes");
        s.push('\n');
        for r in &self.records {
            s.push_str(&serde_json::to_string(r).expect("record serializes"));
            s.push('\n');
        }
        s
    }

    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header: ManifestHeader =
            serde_json::from_str(lines.next().ok_or_else(|| Error::format(path, "empty manifest"))?)
                .map_err(|e| Error::format(path, format!("header: {e}")))?;
        let records = lines
            .enumerate()
            .map(|(i, l)| serde_json::from_str(l).map_err(|e| Error::format(path, format!("record {}: {e}", i + 1))))
            .collect::<Result<Vec<ManifestRecord>>>()?;
        Ok(Self { header, records })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_jsonl()).map_err(|e| Error::io(path, e))
    }

    pub fn model_ids(&self) -> BTreeSet<&str> {
        self.records.iter().map(|r| r.model_id.as_str()).collect()
    }

    fn subset(&self, keep: impl Fn(&ManifestRecord) -> bool) -> Manifest {
        let records: Vec<ManifestRecord> = self.records.iter().filter(|r| keep(r)).cloned().collect();
        let mut header = self.header.clone();
        header.records = records.len();
        header.models = records.iter().map(|r| &r.model_id).collect::<BTreeSet<_>>().len();
        Manifest { header, records }
    }

    /// Checks the manifest against the images under `dir` and its own
    /// invariants.
    pub fn verify(&self, dir: &Path, phi: Option<&FittedBasis>) -> Result<()> {
        let mut per_model: BTreeMap<&str, (usize, usize)> = BTreeMap::new();
        for (i, r) in self.records.iter().enumerate() {
            let bad = |msg: String| Error::invalid(format!("record {}: {msg}", i + 1));
            let report = pose::validate(&r.pose)?;
            if !report.is_empty() {
                return Err(bad(format!("pose fails validation: {:?}", report.violations)));
            }
            if r.group == PoseGroup::FrontalizedExpression && r.pose.angles_deg != [0.0; ANGLE_DIM] {
                return Err(bad("frontal record has nonzero angles".into()));
            }
            let path = dir.join(&r.image);
            let img = image::open(&path)
                .map_err(|e| match e {
                    image::ImageError::IoError(io) => Error::io(&path, io),
                    other => Error::Image(other),
                })?
                .to_rgba8();
            if head::pixel_hash(&img) != r.pixel_hash {
                return Err(bad(format!("pixel hash mismatch for {}", r.image)));
            }
            if !img.pixels().any(|p| p.0[3] > 0) {
                return Err(bad(format!("empty alpha mask in {}", r.image)));
            }
            if let (Some(phi), Some(mapped)) = (phi, &r.mapped) {
                if mapping::map_pose_vector(&r.pose, phi) != *mapped {
                    return Err(bad("mapped pose does not match Φ".into()));
                }
            }
            let e = per_model.entry(&r.model_id).or_insert((0, r.morph_count));
            e.0 += 1;
        }
        for (model, (n, morphs)) in per_model {
            let want = sample_count(morphs as i64)? * self.header.shaders.len() * 2;
            if n != want {
                return Err(Error::invalid(format!("model {model} has {n} records, expected {want}")));
            }
        }
        Ok(())
    }
}

/// One character to render.
#[derive(Debug, Clone)]
pub struct BuildUnit {
    pub model_id: String,
    pub character: CharacterDescriptor,
    pub availability: MorphAvailability,
}

pub fn character_seed(model_id: &str, global_seed: u64) -> u64 {
    derive_seed("character", model_id, global_seed)
}

/// Synthetic characters annotated from their own supported morphs.
pub fn fixture_units(cfg: &BuildConfig) -> Vec<BuildUnit> {
    (0..cfg.characters)
        .map(|i| {
            let model_id = fixture::model_id(i);
            let seed = character_seed(&model_id, cfg.seed);
            let character = CharacterDescriptor::generate(seed, cfg.support_probability);
            let availability = MorphAvailability { available: character.supported.clone(), seed };
            BuildUnit { model_id, character, availability }
        })
        .collect()
}

/// Catalog models with availability from inspected, accepted records.
pub fn catalog_units(cfg: &BuildConfig, dir: &Path) -> Result<Vec<BuildUnit>> {
    let log = dir.join(LOG_FILE);
    if !log.exists() {
        return Err(Error::io(&log, std::io::Error::new(std::io::ErrorKind::NotFound, "annotation log not found")));
    }
    let store = AnnotationStore::open(dir, cfg.min_models)?;
    store
        .catalog()
        .models
        .keys()
        .map(|model_id| {
            let seed = character_seed(model_id, cfg.seed);
            let availability = store.availability(model_id, seed)?;
            let character = CharacterDescriptor::generate(seed, cfg.support_probability)
                .with_supported(availability.available.iter().copied());
            Ok(BuildUnit { model_id: model_id.clone(), character, availability })
        })
        .collect()
}

pub fn image_name(model_id: &str, draw: u64, group: PoseGroup, shader: u8) -> String {
    let g = match group {
        PoseGroup::FrontalizedExpression => "front",
        PoseGroup::RotatedExpression => "rot",
    };
    format!("images/{model_id}/{draw:03}_{g}_s{shader}.png")
}

fn build_unit(
    unit: &BuildUnit,
    cfg: &BuildConfig,
    out: &Path,
    phi: Option<&FittedBasis>,
) -> Result<Vec<ManifestRecord>> {
    let n = sample_count(unit.availability.len() as i64)?;
    let dir = out.join("images").join(&unit.model_id);
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let per_draw: Vec<Vec<ManifestRecord>> = (0..n as u64)
        .into_par_iter()
        .map(|draw| {
            let (front, rot) = sample_pair(&unit.availability, draw);
            let mut records = Vec::with_capacity(2 * cfg.shaders.len());
            for (group, pose) in [(PoseGroup::FrontalizedExpression, front), (PoseGroup::RotatedExpression, rot)] {
                for &shader in &cfg.shaders {
                    let frame = head::render(&unit.character, &pose, shader, cfg.resolution)?;
                    let image = image_name(&unit.model_id, draw, group, shader);
                    fixture::save_png(&frame.image, &out.join(&image))?;
                    records.push(ManifestRecord {
                        model_id: unit.model_id.clone(),
                        image,
                        group,
                        shader,
                        pose,
                        mapped: phi.map(|phi| mapping::map_pose_vector(&pose, phi)),
                        character_seed: unit.character.seed,
                        draw_index: draw,
                        morph_count: unit.availability.len(),
                        pixel_hash: frame.pixel_hash(),
                    });
                }
            }
            Ok(records)
        })
        .collect::<Result<_>>()?;
    Ok(per_draw.into_iter().flatten().collect())
}

/// Φ for mapped output: loaded from `cfg.phi` or fitted on the default model.
pub fn resolve_phi(cfg: &BuildConfig) -> Result<FittedBasis> {
    match &cfg.phi {
        Some(path) => FittedBasis::load(path),
        None => {
            let (model, rules) = LandmarkModel::default_model();
            mapping::build_phi(&model, &rules)
        }
    }
}

/// Renders every unit into `out` and writes the manifest (and Φ when mapped
/// poses are included). Units are processed in parallel on the current rayon
/// pool; output does not depend on scheduling.
pub fn build_units(cfg: &BuildConfig, units: &[BuildUnit], out: &Path) -> Result<Manifest> {
    cfg.check()?;
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let phi = if cfg.include_mapped { Some(resolve_phi(cfg)?) } else { None };
    let chunks: Vec<Vec<ManifestRecord>> =
        units.par_iter().map(|u| build_unit(u, cfg, out, phi.as_ref())).collect::<Result<_>>()?;
    let mut records: Vec<ManifestRecord> = chunks.into_iter().flatten().collect();
    records.sort_by(|a, b| a.sort_key().cmp(&b.sort_key()));
    if let Some(phi) = &phi {
        phi.save(&out.join(PHI_FILE))?;
    }
    let manifest = Manifest {
        header: ManifestHeader {
            pipeline_version: PIPELINE_VERSION.into(),
            seed: cfg.seed,
            shaders: cfg.shaders.clone(),
            resolution: cfg.resolution,
            counts_policy: COUNTS_POLICY.into(),
            phi_hash: phi.as_ref().map(FittedBasis::hash),
            models: units.len(),
            records: records.len(),
            config: cfg.clone(),
        },
        records,
    };
    manifest.save(&out.join(MANIFEST_FILE))?;
    Ok(manifest)
}

pub fn build(cfg: &BuildConfig, out: &Path) -> Result<Manifest> {
    cfg.check()?;
    let units = match &cfg.catalog {
        Some(dir) => catalog_units(cfg, dir)?,
        None => fixture_units(cfg),
    };
    build_units(cfg, &units, out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AxisStats {
    /// Counts over `[-20, 20]` in 5° bins; the top edge falls in the last bin.
    pub histogram: [usize; HISTOGRAM_BINS],
    pub min: f64,
    pub max: f64,
    /// Values outside the sampler range (not binned).
    pub out_of_range: usize,
}

impl AxisStats {
    pub fn from_values(values: impl IntoIterator<Item = f64>) -> Self {
        let mut s =
            AxisStats { histogram: [0; HISTOGRAM_BINS], min: f64::INFINITY, max: f64::NEG_INFINITY, out_of_range: 0 };
        let width = 2.0 * SAMPLER_ANGLE_LIMIT / HISTOGRAM_BINS as f64;
        for v in values {
            s.min = s.min.min(v);
            s.max = s.max.max(v);
            if !(-SAMPLER_ANGLE_LIMIT..=SAMPLER_ANGLE_LIMIT).contains(&v) {
                s.out_of_range += 1;
                continue;
            }
            let bin = (((v + SAMPLER_ANGLE_LIMIT) / width).floor() as usize).min(HISTOGRAM_BINS - 1);
            s.histogram[bin] += 1;
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestStats {
    pub records: usize,
    pub models: usize,
    /// yaw, pitch, roll
    pub angles: [AxisStats; ANGLE_DIM],
    /// Available-morph count → number of models.
    pub morph_counts: BTreeMap<usize, usize>,
    pub mean_morph_count: f64,
    pub by_group: BTreeMap<String, usize>,
    pub by_shader: BTreeMap<u8, usize>,
}

pub fn stats(records: &[ManifestRecord]) -> ManifestStats {
    let angles = [0, 1, 2].map(|a| AxisStats::from_values(records.iter().map(|r| r.pose.angles_deg[a])));
    let mut per_model: BTreeMap<&str, usize> = BTreeMap::new();
    let mut by_group = BTreeMap::new();
    let mut by_shader = BTreeMap::new();
    for r in records {
        per_model.insert(&r.model_id, r.morph_count);
        *by_group.entry(r.group.as_str().to_string()).or_insert(0) += 1;
        *by_shader.entry(r.shader).or_insert(0) += 1;
    }
    let mut morph_counts = BTreeMap::new();
    for &c in per_model.values() {
        *morph_counts.entry(c).or_insert(0) += 1;
    }
    let mean_morph_count =
        if per_model.is_empty() { 0.0 } else { per_model.values().sum::<usize>() as f64 / per_model.len() as f64 };
    ManifestStats {
        records: records.len(),
        models: per_model.len(),
        angles,
        morph_counts,
        mean_morph_count,
        by_group,
        by_shader,
    }
}

/// Partitions model ids into train/test by a seed-free hash order, so the
/// assignment of a model never depends on which other models are present
/// beyond the train count.
pub fn split_ids<'a>(
    ids: impl IntoIterator<Item = &'a str>,
    train_fraction: f64,
) -> Result<(BTreeSet<String>, BTreeSet<String>)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::invalid(format!("train fraction must lie in (0, 1), got {train_fraction}")));
    }
    let mut ids: Vec<&str> = ids.into_iter().collect::<BTreeSet<_>>().into_iter().collect();
    ids.sort_by_key(|id| (derive_seed("split", id, 0), *id));
    let n_train = (ids.len() as f64 * train_fraction).round() as usize;
    let train = ids[..n_train].iter().map(|s| s.to_string()).collect();
    let test = ids[n_train..].iter().map(|s| s.to_string()).collect();
    Ok((train, test))
}

pub fn split(manifest: &Manifest, train_fraction: f64) -> Result<(Manifest, Manifest)> {
    let (train, _) = split_ids(manifest.model_ids(), train_fraction)?;
    Ok((manifest.subset(|r| train.contains(&r.model_id)), manifest.subset(|r| !train.contains(&r.model_id))))
}
