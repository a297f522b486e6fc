//! Pose vectors and the target-morph taxonomy.
//!
//! A pose vector has 20 entries: 17 per-side expression intensities followed
//! by yaw, pitch and roll in degrees. Slot layout:
//!
//! | slots  | meaning                                                        |
//! |--------|----------------------------------------------------------------|
//! | 0..6   | eye: closed L/R, unimpressed L/R, surprised L/R                |
//! | 6..12  | eyebrow: angry L/R, raised L/R, lowered L/R                    |
//! | 12..17 | mouth: A, E, I, O, U                                           |
//! | 17..20 | yaw, pitch, roll (degrees)                                     |
//!
//! "Left" is always the character's own left.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const EXPR_DIM: usize = 17;
pub const ANGLE_DIM: usize = 3;
pub const POSE_DIM: usize = EXPR_DIM + ANGLE_DIM;
pub const TARGET_MORPH_COUNT: usize = 23;

/// Bound of the head-angle sampler, in degrees.
pub const SAMPLER_ANGLE_LIMIT: f64 = 20.0;

pub const YAW: usize = 0;
pub const PITCH: usize = 1;
pub const ROLL: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Part {
    Eye,
    Eyebrow,
    Mouth,
}

impl Part {
    pub const ALL: [Part; 3] = [Part::Eye, Part::Eyebrow, Part::Mouth];

    pub fn semantics(self) -> &'static [Semantic] {
        match self {
            Part::Eye => &[Semantic::Closed, Semantic::Unimpressed, Semantic::Surprised],
            Part::Eyebrow => &[Semantic::Angry, Semantic::Raised, Semantic::Lowered],
            Part::Mouth => &[Semantic::A, Semantic::E, Semantic::I, Semantic::O, Semantic::U],
        }
    }

    /// Expression slots owned by this part.
    pub fn slot_range(self) -> std::ops::Range<usize> {
        match self {
            Part::Eye => 0..6,
            Part::Eyebrow => 6..12,
            Part::Mouth => 12..17,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Semantic {
    Closed,
    Unimpressed,
    Surprised,
    Angry,
    Raised,
    Lowered,
    A,
    E,
    I,
    O,
    U,
}

impl Semantic {
    pub fn part(self) -> Part {
        match self {
            Semantic::Closed | Semantic::Unimpressed | Semantic::Surprised => Part::Eye,
            Semantic::Angry | Semantic::Raised | Semantic::Lowered => Part::Eyebrow,
            _ => Part::Mouth,
        }
    }

    /// Position of this semantic within its part.
    fn ordinal(self) -> usize {
        self.part().semantics().iter().position(|s| *s == self).expect("semantic belongs to its part")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Laterality {
    Left,
    Right,
    Both,
}

/// One of the 23 canonical expression semantics.
///
/// Ids are laid out as eye `0..9`, eyebrow `9..18`, mouth `18..23`. Within
/// eye and eyebrow blocks the order is semantic-major, then
/// `both, left, right`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TargetMorph {
    id: u8,
}

impl TargetMorph {
    pub fn from_id(id: u8) -> Result<Self> {
        if (id as usize) < TARGET_MORPH_COUNT {
            Ok(Self { id })
        } else {
            Err(Error::invalid(format!("target morph id {id} out of range 0..23")))
        }
    }

    pub fn new(semantic: Semantic, laterality: Laterality) -> Result<Self> {
        let part = semantic.part();
        let id = match part {
            Part::Mouth => {
                if laterality != Laterality::Both {
                    return Err(Error::invalid("mouth morphs are always `both`"));
                }
                18 + semantic.ordinal()
            }
            Part::Eye | Part::Eyebrow => {
                let base = if part == Part::Eye { 0 } else { 9 };
                let side = match laterality {
                    Laterality::Both => 0,
                    Laterality::Left => 1,
                    Laterality::Right => 2,
                };
                base + semantic.ordinal() * 3 + side
            }
        };
        Ok(Self { id: id as u8 })
    }

    pub fn all() -> impl Iterator<Item = TargetMorph> {
        (0..TARGET_MORPH_COUNT as u8).map(|id| TargetMorph { id })
    }

    pub fn id(self) -> u8 {
        self.id
    }

    pub fn part(self) -> Part {
        match self.id {
            0..=8 => Part::Eye,
            9..=17 => Part::Eyebrow,
            _ => Part::Mouth,
        }
    }

    pub fn semantic(self) -> Semantic {
        let part = self.part();
        let idx = match part {
            Part::Eye => self.id as usize / 3,
            Part::Eyebrow => (self.id as usize - 9) / 3,
            Part::Mouth => self.id as usize - 18,
        };
        part.semantics()[idx]
    }

    pub fn laterality(self) -> Laterality {
        match self.part() {
            Part::Mouth => Laterality::Both,
            _ => match self.id % 3 {
                0 => Laterality::Both,
                1 => Laterality::Left,
                _ => Laterality::Right,
            },
        }
    }

    /// Expression slots this morph drives: two for `both` eye/eyebrow
    /// morphs, one otherwise.
    pub fn slots(self) -> Vec<usize> {
        let part = self.part();
        let start = part.slot_range().start;
        match part {
            Part::Mouth => vec![start + self.semantic().ordinal()],
            _ => {
                let left = start + self.semantic().ordinal() * 2;
                match self.laterality() {
                    Laterality::Left => vec![left],
                    Laterality::Right => vec![left + 1],
                    Laterality::Both => vec![left, left + 1],
                }
            }
        }
    }

    /// Human-readable label in the style of the annotation tables, e.g.
    /// `Left Closed Eye` or `Mouth(A)`.
    pub fn label(self) -> String {
        let sem = match self.semantic() {
            Semantic::Closed => "Closed",
            Semantic::Unimpressed => "Unimpressed",
            Semantic::Surprised => "Surprised",
            Semantic::Angry => "Angry",
            Semantic::Raised => "Raised",
            Semantic::Lowered => "Lowered",
            Semantic::A => return "Mouth(A)".into(),
            Semantic::E => return "Mouth(E)".into(),
            Semantic::I => return "Mouth(I)".into(),
            Semantic::O => return "Mouth(O)".into(),
            Semantic::U => return "Mouth(U)".into(),
        };
        let (single, plural) = match self.part() {
            Part::Eye => ("Eye", "Eyes"),
            _ => ("Eyebrow", "Eyebrows"),
        };
        match self.laterality() {
            Laterality::Both => format!("{sem} {plural}"),
            Laterality::Left => format!("Left {sem} {single}"),
            Laterality::Right => format!("Right {sem} {single}"),
        }
    }
}

impl fmt::Display for TargetMorph {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

pub fn slots_of(m: TargetMorph) -> Vec<usize> {
    m.slots()
}

/// Which of the two image groups a pose belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PoseGroup {
    FrontalizedExpression,
    RotatedExpression,
}

impl PoseGroup {
    pub fn as_str(self) -> &'static str {
        match self {
            PoseGroup::FrontalizedExpression => "frontalized_expression",
            PoseGroup::RotatedExpression => "rotated_expression",
        }
    }
}

/// The 20-dim pose: expression intensities plus head angles in degrees.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PoseVector {
    pub expr: [f64; EXPR_DIM],
    /// yaw, pitch, roll
    pub angles_deg: [f64; ANGLE_DIM],
}

impl PoseVector {
    pub fn neutral() -> Self {
        Self::default()
    }

    pub fn from_slice(values: &[f64]) -> Result<Self> {
        if values.len() != POSE_DIM {
            return Err(Error::invalid(format!("pose vector needs {POSE_DIM} values, got {}", values.len())));
        }
        let mut p = Self::default();
        p.expr.copy_from_slice(&values[..EXPR_DIM]);
        p.angles_deg.copy_from_slice(&values[EXPR_DIM..]);
        Ok(p)
    }

    pub fn to_array(&self) -> [f64; POSE_DIM] {
        let mut out = [0.0; POSE_DIM];
        out[..EXPR_DIM].copy_from_slice(&self.expr);
        out[EXPR_DIM..].copy_from_slice(&self.angles_deg);
        out
    }

    /// Unit vector on a single expression slot.
    pub fn unit_slot(slot: usize, intensity: f64) -> Self {
        let mut p = Self::default();
        p.expr[slot] = intensity;
        p
    }

    pub fn with_angles(mut self, yaw: f64, pitch: f64, roll: f64) -> Self {
        self.angles_deg = [yaw, pitch, roll];
        self
    }

    pub fn frontalized(mut self) -> Self {
        self.angles_deg = [0.0; ANGLE_DIM];
        self
    }

    /// Comma-separated text form in slot order.
    pub fn to_csv_row(&self) -> String {
        self.to_array().iter().map(|v| format!("{v}")).collect::<Vec<_>>().join(",")
    }

    pub fn parse_csv_row(line: &str) -> Result<Self> {
        let values = line
            .split(',')
            .map(|s| s.trim().parse::<f64>().map_err(|e| Error::invalid(format!("bad pose value {s:?}: {e}"))))
            .collect::<Result<Vec<_>>>()?;
        Self::from_slice(&values)
    }
}

impl Serialize for PoseVector {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.to_array().serialize(s)
    }
}

impl<'de> Deserialize<'de> for PoseVector {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let v = Vec::<f64>::deserialize(d)?;
        PoseVector::from_slice(&v).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    /// Expression intensity outside `[0, 1]`.
    ExprOutOfRange { slot: usize, value: f64 },
    /// Finite head angle outside the sampler range. Flag only; such poses
    /// are still usable.
    AngleOutsideSamplerRange { axis: usize, value: f64 },
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_empty(&self) -> bool {
        self.violations.is_empty()
    }

    /// True when only sampler-range flags are present.
    pub fn is_usable(&self) -> bool {
        self.violations.iter().all(|v| matches!(v, Violation::AngleOutsideSamplerRange { .. }))
    }
}

/// Checks a pose against the canonical invariants.
///
/// Non-finite entries are a structural error, not a violation.
pub fn validate(p: &PoseVector) -> Result<ValidationReport> {
    if let Some(i) = p.to_array().iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite { index: i });
    }
    let mut report = ValidationReport::default();
    for (slot, &value) in p.expr.iter().enumerate() {
        if !(0.0..=1.0).contains(&value) {
            report.violations.push(Violation::ExprOutOfRange { slot, value });
        }
    }
    for (axis, &value) in p.angles_deg.iter().enumerate() {
        if value.abs() > SAMPLER_ANGLE_LIMIT {
            report.violations.push(Violation::AngleOutsideSamplerRange { axis, value });
        }
    }
    Ok(report)
}

/// Componentwise `(1 - t) p + t q` over all 20 entries.
pub fn lerp(p: &PoseVector, q: &PoseVector, t: f64) -> Result<PoseVector> {
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::invalid(format!("interpolation parameter {t} outside [0, 1]")));
    }
    let a = p.to_array();
    let b = q.to_array();
    let mut out = [0.0; POSE_DIM];
    for i in 0..POSE_DIM {
        out[i] = (1.0 - t) * a[i] + t * b[i];
    }
    PoseVector::from_slice(&out)
}

/// `steps` evenly spaced poses strictly between `p` and `q`.
pub fn interpolate(p: &PoseVector, q: &PoseVector, steps: usize) -> Result<Vec<PoseVector>> {
    (1..=steps).map(|i| lerp(p, q, i as f64 / (steps + 1) as f64)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn taxonomy_partitions_9_9_5() {
        let count = |part| TargetMorph::all().filter(|m| m.part() == part).count();
        assert_eq!(TargetMorph::all().count(), 23);
        assert_eq!(count(Part::Eye), 9);
        assert_eq!(count(Part::Eyebrow), 9);
        assert_eq!(count(Part::Mouth), 5);
    }

    #[test]
    fn ids_round_trip_through_constructor() {
        for m in TargetMorph::all() {
            assert_eq!(TargetMorph::new(m.semantic(), m.laterality()).unwrap(), m);
        }
        assert!(TargetMorph::new(Semantic::A, Laterality::Left).is_err());
        assert!(TargetMorph::from_id(23).is_err());
    }

    #[test]
    fn slot_examples() {
        let closed_both = TargetMorph::new(Semantic::Closed, Laterality::Both).unwrap();
        assert_eq!(slots_of(closed_both), vec![0, 1]);
        let raised_left = TargetMorph::new(Semantic::Raised, Laterality::Left).unwrap();
        assert_eq!(slots_of(raised_left), vec![8]);
        let mouth_o = TargetMorph::new(Semantic::O, Laterality::Both).unwrap();
        assert_eq!(slots_of(mouth_o), vec![15]);
    }

    #[test]
    fn slots_cover_expression_dims_without_conflict() {
        let mut owner: Vec<Option<(Part, Semantic, usize)>> = vec![None; EXPR_DIM];
        for m in TargetMorph::all() {
            for s in m.slots() {
                let side = if m.part() == Part::Mouth { 0 } else { (s - m.part().slot_range().start) % 2 };
                let key = (m.part(), m.semantic(), side);
                match owner[s] {
                    None => owner[s] = Some(key),
                    Some(prev) => assert_eq!(prev, key, "slot {s} owned twice"),
                }
            }
        }
        assert!(owner.iter().all(Option::is_some));
    }

    #[test]
    fn labels() {
        assert_eq!(TargetMorph::from_id(18).unwrap().label(), "Mouth(A)");
        assert_eq!(TargetMorph::from_id(1).unwrap().label(), "Left Closed Eye");
        assert_eq!(TargetMorph::from_id(9).unwrap().label(), "Angry Eyebrows");
    }

    #[test]
    fn validate_examples() {
        assert!(validate(&PoseVector::neutral()).unwrap().is_empty());

        let mut p = PoseVector::neutral();
        p.expr[12] = 1.2;
        let r = validate(&p).unwrap();
        assert_eq!(r.violations, vec![Violation::ExprOutOfRange { slot: 12, value: 1.2 }]);
        assert!(!r.is_usable());

        let p = PoseVector::neutral().with_angles(25.0, 0.0, 0.0);
        let r = validate(&p).unwrap();
        assert_eq!(r.violations, vec![Violation::AngleOutsideSamplerRange { axis: YAW, value: 25.0 }]);
        assert!(r.is_usable());

        let mut p = PoseVector::neutral();
        p.angles_deg[1] = f64::NAN;
        assert!(matches!(validate(&p), Err(Error::NonFinite { index: 18 })));
    }

    #[test]
    fn lerp_examples() {
        let p = PoseVector::neutral();
        let q = PoseVector::unit_slot(12, 1.0).with_angles(20.0, 0.0, 0.0);
        assert_eq!(lerp(&p, &q, 0.0).unwrap(), p);
        assert_eq!(lerp(&p, &q, 1.0).unwrap(), q);
        let mid = lerp(&p, &q, 0.5).unwrap();
        let mut expected = PoseVector::unit_slot(12, 0.5);
        expected.angles_deg[YAW] = 10.0;
        assert_eq!(mid, expected);
        assert!(lerp(&p, &q, 1.5).is_err());
        assert!(lerp(&p, &q, -0.1).is_err());
    }

    #[test]
    fn interpolate_excludes_endpoints() {
        let p = PoseVector::neutral();
        let q = PoseVector::unit_slot(0, 1.0);
        let rows = interpolate(&p, &q, 5).unwrap();
        assert_eq!(rows.len(), 5);
        for (i, r) in rows.iter().enumerate() {
            assert!((r.expr[0] - (i + 1) as f64 / 6.0).abs() < 1e-15);
        }
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let mut p = PoseVector::unit_slot(3, 0.123456789012345);
        p.angles_deg = [-19.99999, 1.0 / 3.0, 7.0];
        let back = PoseVector::parse_csv_row(&p.to_csv_row()).unwrap();
        assert_eq!(back, p);
    }
}
