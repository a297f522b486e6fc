//! Random pose draws for a character given the target morphs it supports.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pose::{Laterality, Part, PoseVector, Semantic, TargetMorph, SAMPLER_ANGLE_LIMIT};
use crate::rng::Stream;

/// Models with more than this many annotated target morphs get the full
/// sample count.
pub const RICH_MODEL_MIN_MORPHS: usize = 5;
pub const RICH_SAMPLE_COUNT: usize = 100;
pub const SPARSE_SAMPLE_COUNT: usize = 20;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MorphAvailability {
    /// Target-morph ids the character supports.
    pub available: BTreeSet<u8>,
    /// Per-character stream seed.
    pub seed: u64,
}

impl MorphAvailability {
    pub fn new(available: impl IntoIterator<Item = TargetMorph>, seed: u64) -> Self {
        Self { available: available.into_iter().map(TargetMorph::id).collect(), seed }
    }

    pub fn all(seed: u64) -> Self {
        Self::new(TargetMorph::all(), seed)
    }

    pub fn none(seed: u64) -> Self {
        Self { available: BTreeSet::new(), seed }
    }

    pub fn contains(&self, m: TargetMorph) -> bool {
        self.available.contains(&m.id())
    }

    pub fn len(&self) -> usize {
        self.available.len()
    }

    pub fn is_empty(&self) -> bool {
        self.available.is_empty()
    }

    pub fn check(&self) -> Result<()> {
        match self.available.iter().find(|id| **id as usize >= crate::pose::TARGET_MORPH_COUNT) {
            Some(id) => Err(Error::invalid(format!("unknown target morph id {id}"))),
            None => Ok(()),
        }
    }

    /// Semantics of `part` with at least one supported morph, in canonical order.
    fn semantics_of(&self, part: Part) -> Vec<Semantic> {
        part.semantics()
            .iter()
            .copied()
            .filter(|s| {
                [Laterality::Both, Laterality::Left, Laterality::Right]
                    .iter()
                    .filter_map(|lat| TargetMorph::new(*s, *lat).ok())
                    .any(|m| self.contains(m))
            })
            .collect()
    }

    fn has(&self, s: Semantic, lat: Laterality) -> bool {
        TargetMorph::new(s, lat).map(|m| self.contains(m)).unwrap_or(false)
    }
}

/// Number of pose draws per group and shader for a model.
pub fn sample_count(n_target_morphs: i64) -> Result<usize> {
    if n_target_morphs < 0 {
        return Err(Error::invalid("negative target morph count"));
    }
    Ok(if n_target_morphs as usize > RICH_MODEL_MIN_MORPHS { RICH_SAMPLE_COUNT } else { SPARSE_SAMPLE_COUNT })
}

/// Draws pose number `draw_index` for a character.
///
/// Per part, one semantic is chosen uniformly among those with a supported
/// morph. Eye and eyebrow semantics with both sided morphs get independent
/// left/right intensities; otherwise a supported `both` morph gets a single
/// intensity on both sides; a lone sided morph drives only its own side.
/// Angles are always drawn (yaw, pitch, roll order) so a draw's frontal and
/// rotated variants share expression values; with `rotate == false` they are
/// zeroed.
pub fn sample_pose(avail: &MorphAvailability, draw_index: u64, rotate: bool) -> PoseVector {
    let mut rng = Stream::new("pose-draw", "", avail.seed, draw_index);
    let mut p = PoseVector::neutral();

    for part in [Part::Eye, Part::Eyebrow] {
        let choices = avail.semantics_of(part);
        if choices.is_empty() {
            continue;
        }
        let s = choices[rng.below(choices.len() as u64) as usize];
        let left = TargetMorph::new(s, Laterality::Left).expect("sided part").slots()[0];
        let right = left + 1;
        let has_left = avail.has(s, Laterality::Left);
        let has_right = avail.has(s, Laterality::Right);
        if has_left && has_right {
            p.expr[left] = rng.unit();
            p.expr[right] = rng.unit();
        } else if avail.has(s, Laterality::Both) {
            let u = rng.unit();
            p.expr[left] = u;
            p.expr[right] = u;
        } else if has_left {
            p.expr[left] = rng.unit();
        } else {
            p.expr[right] = rng.unit();
        }
    }

    let mouths = avail.semantics_of(Part::Mouth);
    if !mouths.is_empty() {
        let s = mouths[rng.below(mouths.len() as u64) as usize];
        let slot = TargetMorph::new(s, Laterality::Both).expect("mouth").slots()[0];
        p.expr[slot] = rng.unit();
    }

    let mut angles = [0.0; 3];
    for a in angles.iter_mut() {
        *a = rng.uniform(-SAMPLER_ANGLE_LIMIT, SAMPLER_ANGLE_LIMIT);
    }
    if rotate {
        p.angles_deg = angles;
    }
    p
}

/// The paired frontal and rotated poses of one draw.
pub fn sample_pair(avail: &MorphAvailability, draw_index: u64) -> (PoseVector, PoseVector) {
    let rotated = sample_pose(avail, draw_index, true);
    (rotated.frontalized(), rotated)
}
