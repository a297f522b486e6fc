//! Synthetic source-morph catalogs with known ground truth.
//!
//! Each synthetic model names its morphs with one of several conventional
//! spellings per target morph, plus a few names that map to nothing.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use crate::catalog::Catalog;
use crate::error::{Error, Result};
use crate::head::{self, CharacterDescriptor};
use crate::pose::{PoseVector, TargetMorph};
use crate::rng::{derive_seed, Stream};

/// Source-morph spellings per target-morph id; the first is the most common.
pub const SOURCE_NAMES: [&[&str]; 23] = [
    &["まばたき", "笑い", "なごみ"],
    &["ウィンク", "ウィンク2", "なごみ左"],
    &["ウィンク右", "なごみ右", "ウィンク２右"],
    &["半目", "じと目", "ジト目"],
    &["じと目左"],
    &["じと目右"],
    &["びっくり", "びっくり２", "驚き"],
    &["びっくり左", "びっくり２左"],
    &["びっくり右", "びっくり２右"],
    &["怒り", "怒り眉", "怒り2"],
    &["怒り左", "怒り眉左", "怒りL"],
    &["怒り右", "怒り眉右", "怒りR"],
    &["上"],
    &["上左", "上L"],
    &["上右", "上R"],
    &["下", "困る"],
    &["下左", "困る左", "困るL", "下L"],
    &["下右", "困る右", "困るR", "下R"],
    &["あ", "ああ", "あ2"],
    &["え", "ええ", "え2", "えー"],
    &["い", "いい", "い2", "いー"],
    &["お", "おお"],
    &["う", "うう"],
];

/// Names that correspond to no target morph.
pub const UNMAPPED_NAMES: [&str; 6] = ["照れ", "涙", "青ざめ", "にやり", "ぺろっ", "はぅ"];

/// Probability that a model uses the most common spelling.
const COMMON_SPELLING: f64 = 0.6;

#[derive(Debug, Clone)]
pub struct FixtureCatalog {
    pub catalog: Catalog,
    /// Correct target for every name; `None` for names that should be rejected.
    pub truth: BTreeMap<String, Option<TargetMorph>>,
    pub characters: BTreeMap<String, CharacterDescriptor>,
}

pub fn model_id(index: usize) -> String {
    format!("model_{index:04}")
}

pub fn preview_path(model_id: &str, name: &str) -> PathBuf {
    // Morph names may contain characters unsuitable for file names; key the
    // preview by a short hash instead.
    let digest = crate::rng::derive_seed("preview", name, 0);
    PathBuf::from(format!("images/{model_id}/{digest:016x}.png"))
}

pub fn neutral_path(model_id: &str) -> PathBuf {
    PathBuf::from(format!("images/{model_id}/neutral.png"))
}

/// Pose showing a single target morph at full intensity.
pub fn morph_pose(m: TargetMorph) -> PoseVector {
    let mut p = PoseVector::neutral();
    for s in m.slots() {
        p.expr[s] = 1.0;
    }
    p
}

pub fn synthetic_catalog(models: usize, seed: u64, support_probability: f64) -> FixtureCatalog {
    let mut catalog = Catalog::default();
    let mut truth = BTreeMap::new();
    let mut characters = BTreeMap::new();
    for i in 0..models {
        let id = model_id(i);
        let ch = CharacterDescriptor::generate(derive_seed("character", &id, seed), support_probability);
        let mut rng = Stream::new("fixture-names", &id, seed, 0);
        catalog.add_model(&id, Some(neutral_path(&id))).expect("valid id");
        for &t in &ch.supported {
            let names = SOURCE_NAMES[t as usize];
            let name = if names.len() == 1 || rng.unit() < COMMON_SPELLING {
                names[0]
            } else {
                names[1 + rng.below(names.len() as u64 - 1) as usize]
            };
            let target = TargetMorph::from_id(t).expect("supported ids are valid");
            if catalog.add_morph(&id, name, preview_path(&id, name)).is_ok() {
                truth.insert(name.to_string(), Some(target));
            }
        }
        for name in UNMAPPED_NAMES {
            if rng.unit() < 0.5 {
                catalog.add_morph(&id, name, preview_path(&id, name)).expect("distinct names");
                truth.insert(name.to_string(), None);
            }
        }
        let own = format!("{id}専用");
        catalog.add_morph(&id, &own, preview_path(&id, &own)).expect("distinct names");
        truth.insert(own, None);
        characters.insert(id, ch);
    }
    FixtureCatalog { catalog, truth, characters }
}

/// Writes `catalog.tsv` and rendered previews to `dir`.
pub fn write_fixture(
    dir: &Path,
    models: usize,
    seed: u64,
    support_probability: f64,
    resolution: u32,
) -> Result<FixtureCatalog> {
    let fx = synthetic_catalog(models, seed, support_probability);
    for (id, entry) in &fx.catalog.models {
        let ch = &fx.characters[id];
        let model_dir = dir.join("images").join(id);
        std::fs::create_dir_all(&model_dir).map_err(|e| Error::io(&model_dir, e))?;
        let frame = head::render(ch, &PoseVector::neutral(), 1, resolution)?;
        save_png(&frame.image, &dir.join(neutral_path(id)))?;
        for (name, morph) in &entry.morphs {
            // Unmapped names preview as neutral.
            let pose = fx.truth[name].map(morph_pose).unwrap_or_else(PoseVector::neutral);
            let frame = head::render(ch, &pose, 1, resolution)?;
            save_png(&frame.image, &dir.join(&morph.preview_image))?;
        }
    }
    fx.catalog.save(dir)?;
    Ok(fx)
}

pub(crate) fn save_png(img: &image::RgbaImage, path: &Path) -> Result<()> {
    use image::codecs::png::{CompressionType, FilterType, PngEncoder};
    use image::ImageEncoder;
    let mut bytes = Vec::new();
    PngEncoder::new_with_quality(&mut bytes, CompressionType::Fast, FilterType::Sub).write_image(
        img.as_raw(),
        img.width(),
        img.height(),
        image::ExtendedColorType::Rgba8,
    )?;
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spelling_table_covers_every_target() {
        for m in TargetMorph::all() {
            assert!(!SOURCE_NAMES[m.id() as usize].is_empty(), "{}", m.label());
        }
    }

    #[test]
    fn fixture_is_deterministic_and_consistent() {
        let a = synthetic_catalog(20, 5, 0.75);
        let b = synthetic_catalog(20, 5, 0.75);
        assert_eq!(a.catalog, b.catalog);
        assert_eq!(a.catalog.models.len(), 20);
        for (id, entry) in &a.catalog.models {
            let ch = &a.characters[id];
            for name in entry.morphs.keys() {
                if let Some(t) = a.truth[name] {
                    assert!(ch.supported.contains(&t.id()));
                }
            }
        }
        let counts = a.catalog.name_counts();
        assert!(counts["あ"] > 5 || counts.contains_key("ああ"));
    }
}
