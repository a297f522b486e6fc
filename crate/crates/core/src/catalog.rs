//! Source-morph catalog and the two-stage semantic annotation workflow.
//!
//! Source morphs sharing a name are first mapped to a target morph as a
//! group, then each resulting record is inspected individually and either
//! accepted or rejected. Every mutation is an event; the current state is the
//! replay of the event log, so replaying the same log always yields the same
//! snapshot.
//!
//! A catalog directory holds:
//!
//! - `catalog.tsv`: `model_id <TAB> morph_name <TAB> preview_path`, one row per
//!   source morph, plus a `<neutral>` row per model for its neutral preview;
//! - `annotations.jsonl`: the event log, one JSON object per line;
//! - image files referenced by the preview paths (relative to the directory).

use std::collections::{BTreeMap, BTreeSet};
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use unicode_normalization::UnicodeNormalization;

use crate::error::{Error, Result};
use crate::pose::TargetMorph;
use crate::sampler::MorphAvailability;

pub const DEFAULT_MIN_MODELS: usize = 50;
pub const CATALOG_FILE: &str = "catalog.tsv";
pub const LOG_FILE: &str = "annotations.jsonl";
const NEUTRAL_ROW: &str = "<neutral>";

/// NFC-normalized morph name.
pub fn normalize(name: &str) -> String {
    name.nfc().collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceMorph {
    pub name: String,
    pub model_id: String,
    /// Rendered preview with the morph at full intensity, relative to the
    /// catalog directory.
    pub preview_image: PathBuf,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ModelEntry {
    pub neutral_image: Option<PathBuf>,
    /// Keyed by normalized name.
    pub morphs: BTreeMap<String, SourceMorph>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Catalog {
    pub models: BTreeMap<String, ModelEntry>,
}

impl Catalog {
    pub fn add_model(&mut self, model_id: &str, neutral_image: Option<PathBuf>) -> Result<()> {
        if model_id.is_empty() || model_id.contains(['\t', '\n', '/']) {
            return Err(Error::invalid(format!("bad model id {model_id:?}")));
        }
        let entry = self.models.entry(model_id.to_string()).or_default();
        if neutral_image.is_some() {
            entry.neutral_image = neutral_image;
        }
        Ok(())
    }

    pub fn add_morph(&mut self, model_id: &str, name: &str, preview_image: PathBuf) -> Result<()> {
        let name = normalize(name);
        if name.is_empty() || name.contains(['\t', '\n']) {
            return Err(Error::invalid(format!("bad morph name {name:?}")));
        }
        self.add_model(model_id, None)?;
        let entry = self.models.get_mut(model_id).expect("just added");
        if entry.morphs.contains_key(&name) {
            return Err(Error::Conflict(format!("duplicate morph {name:?} in model {model_id}")));
        }
        entry.morphs.insert(name.clone(), SourceMorph { name, model_id: model_id.to_string(), preview_image });
        Ok(())
    }

    pub fn contains(&self, model_id: &str, name: &str) -> bool {
        self.models.get(model_id).is_some_and(|m| m.morphs.contains_key(name))
    }

    /// Distinct models containing each normalized name.
    pub fn name_counts(&self) -> BTreeMap<String, usize> {
        let mut counts = BTreeMap::new();
        for m in self.models.values() {
            for name in m.morphs.keys() {
                *counts.entry(name.clone()).or_insert(0) += 1;
            }
        }
        counts
    }

    pub fn models_with(&self, name: &str) -> Vec<&str> {
        self.models.iter().filter(|(_, m)| m.morphs.contains_key(name)).map(|(id, _)| id.as_str()).collect()
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join(CATALOG_FILE);
        let f = File::open(&path).map_err(|e| Error::io(&path, e))?;
        let mut cat = Catalog::default();
        for (n, line) in BufReader::new(f).lines().enumerate() {
            let line = line.map_err(|e| Error::io(&path, e))?;
            if n == 0 && line.starts_with("model_id\t") || line.trim().is_empty() {
                continue;
            }
            let cols: Vec<&str> = line.split('\t').collect();
            if cols.len() != 3 {
                return Err(Error::format(&path, format!("line {}: expected 3 columns", n + 1)));
            }
            let res = if cols[1] == NEUTRAL_ROW {
                cat.add_model(cols[0], Some(PathBuf::from(cols[2])))
            } else {
                cat.add_morph(cols[0], cols[1], PathBuf::from(cols[2]))
            };
            res.map_err(|e| Error::format(&path, format!("line {}: {e}", n + 1)))?;
        }
        Ok(cat)
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut s = String::from("model_id\tmorph_name\tpreview\n");
        for (id, m) in &self.models {
            if let Some(n) = &m.neutral_image {
                s.push_str(&format!("{id}\t{NEUTRAL_ROW}\t{}\n", n.display()));
            }
            for morph in m.morphs.values() {
                s.push_str(&format!("{id}\t{}\t{}\n", morph.name, morph.preview_image.display()));
            }
        }
        let path = dir.join(CATALOG_FILE);
        std::fs::write(&path, s).map_err(|e| Error::io(&path, e))
    }
}

/// Target of an annotation record.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Target {
    Morph(TargetMorph),
    Rejected,
}

impl Serialize for Target {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Target::Morph(m) => s.serialize_u8(m.id()),
            Target::Rejected => s.serialize_str("REJECT"),
        }
    }
}

impl<'de> Deserialize<'de> for Target {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Id(u8),
            Tag(String),
        }
        match Raw::deserialize(d)? {
            Raw::Id(id) => TargetMorph::from_id(id).map(Target::Morph).map_err(serde::de::Error::custom),
            Raw::Tag(t) if t == "REJECT" => Ok(Target::Rejected),
            Raw::Tag(t) => Err(serde::de::Error::custom(format!("unknown target {t:?}"))),
        }
    }
}

impl Target {
    pub fn label(&self) -> String {
        match self {
            Target::Morph(m) => m.label(),
            Target::Rejected => "X".into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    GroupAnnotated,
    Inspected,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Accept,
    Reject,
}

/// One annotation event; the latest event per source morph is its record.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationRecord {
    pub model_id: String,
    pub name: String,
    pub target: Target,
    pub stage: Stage,
    pub annotator: String,
    pub timestamp: DateTime<Utc>,
}

impl AnnotationRecord {
    pub fn is_final(&self) -> bool {
        self.stage == Stage::Inspected
    }

    pub fn to_line(&self) -> String {
        serde_json::to_string(self).expect("record serializes")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupRow {
    pub name: String,
    pub count: usize,
    /// Below the frequency threshold; cannot be annotated.
    pub filtered: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CatalogStats {
    pub model_count: usize,
    pub unique_morph_names: usize,
    /// Fraction of annotated models whose records are all inspected.
    pub progress: f64,
    /// Accepted target-morph count per model.
    pub target_counts: BTreeMap<String, usize>,
    pub snapshot_version: u64,
}

/// Catalog plus the annotation state derived from the event log.
#[derive(Debug, Clone)]
pub struct AnnotationStore {
    catalog: Catalog,
    min_models: usize,
    records: BTreeMap<(String, String), AnnotationRecord>,
    events: Vec<AnnotationRecord>,
    log_path: Option<PathBuf>,
}

impl AnnotationStore {
    pub fn new(catalog: Catalog, min_models: usize) -> Self {
        Self { catalog, min_models, records: BTreeMap::new(), events: Vec::new(), log_path: None }
    }

    /// Loads `catalog.tsv` and replays `annotations.jsonl` (if present); later
    /// mutations append to that log.
    pub fn open(dir: &Path, min_models: usize) -> Result<Self> {
        let catalog = Catalog::load(dir)?;
        let log_path = dir.join(LOG_FILE);
        let events = if log_path.exists() { read_log(&log_path)? } else { Vec::new() };
        let mut store = Self::replay(catalog, min_models, events)?;
        store.log_path = Some(log_path);
        Ok(store)
    }

    pub fn replay(catalog: Catalog, min_models: usize, events: Vec<AnnotationRecord>) -> Result<Self> {
        let mut store = Self::new(catalog, min_models);
        for (i, ev) in events.into_iter().enumerate() {
            store.check_event(&ev).map_err(|e| Error::invalid(format!("event {}: {e}", i + 1)))?;
            store.apply(ev);
        }
        Ok(store)
    }

    pub fn catalog(&self) -> &Catalog {
        &self.catalog
    }

    pub fn min_models(&self) -> usize {
        self.min_models
    }

    /// Number of applied events; increases with every mutation.
    pub fn version(&self) -> u64 {
        self.events.len() as u64
    }

    pub fn events(&self) -> &[AnnotationRecord] {
        &self.events
    }

    pub fn record(&self, model_id: &str, name: &str) -> Option<&AnnotationRecord> {
        self.records.get(&(model_id.to_string(), normalize(name)))
    }

    pub fn records(&self) -> impl Iterator<Item = &AnnotationRecord> {
        self.records.values()
    }

    pub fn group_candidates(&self) -> Vec<GroupRow> {
        let mut rows: Vec<GroupRow> = self
            .catalog
            .name_counts()
            .into_iter()
            .map(|(name, count)| GroupRow { name, count, filtered: count < self.min_models })
            .collect();
        rows.sort_by(|a, b| b.count.cmp(&a.count).then_with(|| a.name.cmp(&b.name)));
        rows
    }

    fn check_event(&self, ev: &AnnotationRecord) -> Result<()> {
        if !self.catalog.contains(&ev.model_id, &ev.name) {
            return Err(Error::NotFound(format!("morph {:?} in model {:?}", ev.name, ev.model_id)));
        }
        let existing = self.records.get(&(ev.model_id.clone(), ev.name.clone()));
        match ev.stage {
            Stage::GroupAnnotated => {
                let count = self.catalog.name_counts().get(&ev.name).copied().unwrap_or(0);
                if count < self.min_models {
                    return Err(Error::invalid(format!(
                        "morph name {:?} occurs in {count} models, below the threshold of {}",
                        ev.name, self.min_models
                    )));
                }
                if ev.target == Target::Rejected {
                    return Err(Error::invalid("group annotation needs a target morph"));
                }
                if existing.is_some_and(AnnotationRecord::is_final) {
                    return Err(Error::Conflict(format!("{}/{} is already inspected", ev.model_id, ev.name)));
                }
            }
            Stage::Inspected => match existing {
                None => {
                    return Err(Error::invalid(format!(
                        "{}/{} has no group annotation to inspect",
                        ev.model_id, ev.name
                    )))
                }
                Some(r) if r.is_final() => {
                    return Err(Error::Conflict(format!("{}/{} is already inspected", ev.model_id, ev.name)))
                }
                Some(r) if ev.target != Target::Rejected && ev.target != r.target => {
                    return Err(Error::invalid("inspection may only accept the annotated target or reject"))
                }
                Some(_) => {}
            },
        }
        Ok(())
    }

    fn apply(&mut self, ev: AnnotationRecord) {
        self.records.insert((ev.model_id.clone(), ev.name.clone()), ev.clone());
        self.events.push(ev);
    }

    fn commit(&mut self, batch: Vec<AnnotationRecord>) -> Result<()> {
        if let Some(path) = &self.log_path {
            let mut text = String::new();
            for ev in &batch {
                text.push_str(&ev.to_line());
                text.push('\n');
            }
            let mut f = OpenOptions::new().create(true).append(true).open(path).map_err(|e| Error::io(path, e))?;
            f.write_all(text.as_bytes()).map_err(|e| Error::io(path, e))?;
            f.flush().map_err(|e| Error::io(path, e))?;
        }
        for ev in batch {
            self.apply(ev);
        }
        Ok(())
    }

    /// Maps every not-yet-inspected source morph named `name` to `target`.
    /// Returns the created records.
    pub fn annotate_group(
        &mut self,
        name: &str,
        target: TargetMorph,
        annotator: &str,
        at: DateTime<Utc>,
    ) -> Result<Vec<AnnotationRecord>> {
        let name = normalize(name);
        let count = self.catalog.name_counts().get(&name).copied().unwrap_or(0);
        if count == 0 {
            return Err(Error::NotFound(format!("morph name {name:?}")));
        }
        if count < self.min_models {
            return Err(Error::invalid(format!(
                "morph name {name:?} occurs in {count} models, below the threshold of {}",
                self.min_models
            )));
        }
        let batch: Vec<AnnotationRecord> = self
            .catalog
            .models_with(&name)
            .into_iter()
            .filter(|m| !self.records.get(&(m.to_string(), name.clone())).is_some_and(AnnotationRecord::is_final))
            .map(|m| AnnotationRecord {
                model_id: m.to_string(),
                name: name.clone(),
                target: Target::Morph(target),
                stage: Stage::GroupAnnotated,
                annotator: annotator.to_string(),
                timestamp: at,
            })
            .collect();
        self.commit(batch.clone())?;
        Ok(batch)
    }

    pub fn inspect(
        &mut self,
        model_id: &str,
        name: &str,
        verdict: Verdict,
        annotator: &str,
        at: DateTime<Utc>,
    ) -> Result<AnnotationRecord> {
        let name = normalize(name);
        if !self.catalog.models.contains_key(model_id) {
            return Err(Error::NotFound(format!("model {model_id:?}")));
        }
        let existing = self
            .records
            .get(&(model_id.to_string(), name.clone()))
            .ok_or_else(|| Error::invalid(format!("{model_id}/{name} has no group annotation to inspect")))?;
        let target = match verdict {
            Verdict::Accept => existing.target,
            Verdict::Reject => Target::Rejected,
        };
        let ev = AnnotationRecord {
            model_id: model_id.to_string(),
            name,
            target,
            stage: Stage::Inspected,
            annotator: annotator.to_string(),
            timestamp: at,
        };
        self.check_event(&ev)?;
        self.commit(vec![ev.clone()])?;
        Ok(ev)
    }

    /// Target morphs with an accepted, inspected record for the model.
    pub fn accepted_targets(&self, model_id: &str) -> Result<BTreeSet<TargetMorph>> {
        if !self.catalog.models.contains_key(model_id) {
            return Err(Error::NotFound(format!("model {model_id:?}")));
        }
        Ok(self
            .records
            .range((model_id.to_string(), String::new())..)
            .take_while(|((m, _), _)| m == model_id)
            .filter_map(|(_, r)| match (r.stage, r.target) {
                (Stage::Inspected, Target::Morph(t)) => Some(t),
                _ => None,
            })
            .collect())
    }

    pub fn availability(&self, model_id: &str, seed: u64) -> Result<MorphAvailability> {
        Ok(MorphAvailability::new(self.accepted_targets(model_id)?, seed))
    }

    pub fn stats(&self) -> CatalogStats {
        let mut annotated = 0usize;
        let mut complete = 0usize;
        let mut target_counts = BTreeMap::new();
        for id in self.catalog.models.keys() {
            let recs: Vec<&AnnotationRecord> = self
                .records
                .range((id.clone(), String::new())..)
                .take_while(|((m, _), _)| m == id)
                .map(|(_, r)| r)
                .collect();
            if !recs.is_empty() {
                annotated += 1;
                if recs.iter().all(|r| r.is_final()) {
                    complete += 1;
                }
            }
            target_counts.insert(id.clone(), self.accepted_targets(id).map(|s| s.len()).unwrap_or(0));
        }
        CatalogStats {
            model_count: self.catalog.models.len(),
            unique_morph_names: self.catalog.name_counts().len(),
            progress: if annotated == 0 { 0.0 } else { complete as f64 / annotated as f64 },
            target_counts,
            snapshot_version: self.version(),
        }
    }

    /// Current record per source morph, tab-separated, sorted by model and name.
    pub fn snapshot_table(&self) -> String {
        let mut s = String::from("model_id\tmorph_name\ttarget\tstage\n");
        for r in self.records.values() {
            let target = match r.target {
                Target::Morph(m) => m.id().to_string(),
                Target::Rejected => "REJECT".into(),
            };
            let stage = match r.stage {
                Stage::GroupAnnotated => "group_annotated",
                Stage::Inspected => "inspected",
            };
            s.push_str(&format!("{}\t{}\t{target}\t{stage}\n", r.model_id, r.name));
        }
        s
    }

    /// Two-column table of inspected source-morph names per target, with
    /// rejected names listed under `X`.
    pub fn mapping_table(&self) -> String {
        let mut by_target: BTreeMap<Target, BTreeSet<&str>> = BTreeMap::new();
        for r in self.records.values().filter(|r| r.is_final()) {
            by_target.entry(r.target).or_default().insert(&r.name);
        }
        let mut s = String::from("source_morphs\ttarget_morph\n");
        for (t, names) in by_target {
            s.push_str(&format!("{}\t{}\n", names.into_iter().collect::<Vec<_>>().join(", "), t.label()));
        }
        s
    }
}

pub fn read_log(path: &Path) -> Result<Vec<AnnotationRecord>> {
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (n, line) in BufReader::new(f).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let mut ev: AnnotationRecord =
            serde_json::from_str(&line).map_err(|e| Error::format(path, format!("line {}: {e}", n + 1)))?;
        ev.name = normalize(&ev.name);
        out.push(ev);
    }
    Ok(out)
}

pub fn write_log(path: &Path, events: &[AnnotationRecord]) -> Result<()> {
    let mut s = String::new();
    for ev in events {
        s.push_str(&ev.to_line());
        s.push('\n');
    }
    std::fs::write(path, s).map_err(|e| Error::io(path, e))
}
