//! Parametric cartoon head and its software renderer.
//!
//! Geometry lives in "face units": the face spans y in `[-0.5, 0.5]`, +x is
//! the character's left, +y is up and +z points at the camera. Every
//! expression deformation moves landmarks only, linearly in intensity; all
//! drawn feature shapes are built from the landmarks. Neutral coordinates
//! and displacements are snapped to a 2^-20 grid so that sums and
//! differences of them are exact.
//!
//! Rendering is orthographic. Head rotation pivots about the neck point and
//! the frame is centred a fixed offset above it, scaled so the neutral head
//! (hair top to chin) fills [`FRAME_FILL`] of the image height.

use std::collections::BTreeSet;

use image::RgbaImage;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::angles::{self, sin_cos};
use crate::error::{Error, Result};
use crate::mapping::{LandmarkShift, SemanticEditRule};
use crate::pose::{PoseVector, EXPR_DIM, TARGET_MORPH_COUNT};
use crate::raster::{fill_polygon, pixel_center, to_fixed, FixedPoint};
use crate::rng::Stream;

pub const LANDMARK_COUNT: usize = 24;
pub const SUPPORTED_RESOLUTIONS: [u32; 3] = [256, 512, 1024];
pub const DEFAULT_RESOLUTION: u32 = 256;

/// Fraction of the image height taken by the neutral head.
pub const FRAME_FILL: f64 = 0.7;
const HAIR_TOP: f64 = 0.64;
const CHIN: f64 = -0.5;
const FRAME_CENTER_ABOVE_PIVOT: f64 = 0.48;
const NECK_PIVOT: [f64; 3] = [0.0, -0.42, -0.05];
const HEAD_DEPTH: f64 = 0.4;

/// Canonical landmark indices.
pub mod lm {
    pub const BROW_L_INNER: usize = 0;
    pub const BROW_L_MID: usize = 1;
    pub const BROW_L_OUTER: usize = 2;
    pub const BROW_R_INNER: usize = 3;
    pub const BROW_R_MID: usize = 4;
    pub const BROW_R_OUTER: usize = 5;
    pub const EYE_L_INNER: usize = 6;
    pub const EYE_L_OUTER: usize = 7;
    pub const EYE_L_UPPER: usize = 8;
    pub const EYE_L_LOWER: usize = 9;
    pub const EYE_R_INNER: usize = 10;
    pub const EYE_R_OUTER: usize = 11;
    pub const EYE_R_UPPER: usize = 12;
    pub const EYE_R_LOWER: usize = 13;
    pub const MOUTH_CORNER_L: usize = 14;
    pub const MOUTH_CORNER_R: usize = 15;
    pub const MOUTH_UPPER_L: usize = 16;
    pub const MOUTH_UPPER_R: usize = 17;
    pub const MOUTH_LOWER_L: usize = 18;
    pub const MOUTH_LOWER_R: usize = 19;
    pub const JAW_L: usize = 20;
    pub const JAW_R: usize = 21;
    pub const CHIN: usize = 22;
    pub const FOREHEAD: usize = 23;

    pub const NAMES: [&str; super::LANDMARK_COUNT] = [
        "brow_l_inner",
        "brow_l_mid",
        "brow_l_outer",
        "brow_r_inner",
        "brow_r_mid",
        "brow_r_outer",
        "eye_l_inner",
        "eye_l_outer",
        "eye_l_upper",
        "eye_l_lower",
        "eye_r_inner",
        "eye_r_outer",
        "eye_r_upper",
        "eye_r_lower",
        "mouth_corner_l",
        "mouth_corner_r",
        "mouth_upper_l",
        "mouth_upper_r",
        "mouth_lower_l",
        "mouth_lower_r",
        "jaw_l",
        "jaw_r",
        "chin",
        "forehead",
    ];
}

/// Left/right landmark correspondence.
pub const MIRROR: [usize; LANDMARK_COUNT] =
    [3, 4, 5, 0, 1, 2, 10, 11, 12, 13, 6, 7, 8, 9, 15, 14, 17, 16, 19, 18, 21, 20, 22, 23];

fn snap(v: f64) -> f64 {
    const GRID: f64 = (1u64 << 20) as f64;
    (v * GRID).round() / GRID
}

pub type Rgb = [u8; 3];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Palette {
    pub skin: Rgb,
    pub hair: Rgb,
    pub eye: Rgb,
    pub iris: Rgb,
    pub brow: Rgb,
    pub mouth: Rgb,
    pub outline: Rgb,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Proportions {
    /// Face width over face height.
    pub face_aspect: f64,
    pub eye_scale: f64,
    pub mouth_half_width: f64,
    pub brow_thickness: f64,
}

impl Proportions {
    pub const FACE_ASPECT: (f64, f64) = (0.68, 0.80);
    pub const EYE_SCALE: (f64, f64) = (0.85, 1.15);
    pub const MOUTH_HALF_WIDTH: (f64, f64) = (0.07, 0.12);
    pub const BROW_THICKNESS: (f64, f64) = (0.018, 0.030);

    fn mid() -> Self {
        let m = |b: (f64, f64)| 0.5 * (b.0 + b.1);
        Self {
            face_aspect: m(Self::FACE_ASPECT),
            eye_scale: m(Self::EYE_SCALE),
            mouth_half_width: m(Self::MOUTH_HALF_WIDTH),
            brow_thickness: m(Self::BROW_THICKNESS),
        }
    }

    pub fn in_bounds(&self) -> bool {
        let ok = |v: f64, b: (f64, f64)| v >= b.0 && v <= b.1;
        ok(self.face_aspect, Self::FACE_ASPECT)
            && ok(self.eye_scale, Self::EYE_SCALE)
            && ok(self.mouth_half_width, Self::MOUTH_HALF_WIDTH)
            && ok(self.brow_thickness, Self::BROW_THICKNESS)
    }
}

/// A synthetic character: everything derives from `seed`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CharacterDescriptor {
    pub seed: u64,
    pub palette: Palette,
    pub proportions: Proportions,
    /// Target-morph ids this character's rig responds to.
    pub supported: BTreeSet<u8>,
}

impl CharacterDescriptor {
    /// Draws a character; each target morph is supported with probability
    /// `support_probability`.
    pub fn generate(seed: u64, support_probability: f64) -> Self {
        let mut rng = Stream::new("character", "", seed, 0);
        let mut draw = |b: (f64, f64)| rng.uniform(b.0, b.1);
        let proportions = Proportions {
            face_aspect: draw(Proportions::FACE_ASPECT),
            eye_scale: draw(Proportions::EYE_SCALE),
            mouth_half_width: draw(Proportions::MOUTH_HALF_WIDTH),
            brow_thickness: draw(Proportions::BROW_THICKNESS),
        };
        let mut channel = |lo: f64, hi: f64| rng.uniform(lo, hi).floor() as u8;
        let skin_base = channel(215.0, 255.0);
        let skin = [skin_base, channel(185.0, 225.0).min(skin_base), channel(165.0, 205.0)];
        let hair = [channel(20.0, 250.0), channel(20.0, 250.0), channel(20.0, 250.0)];
        let eye = [channel(235.0, 256.0), channel(235.0, 256.0), channel(235.0, 256.0)];
        let iris = [channel(20.0, 200.0), channel(20.0, 200.0), channel(40.0, 230.0)];
        let brow = hair.map(|c| (c as u16 * 3 / 5) as u8);
        let palette = Palette {
            skin,
            hair,
            eye,
            iris,
            brow,
            mouth: [channel(120.0, 170.0), channel(30.0, 60.0), channel(40.0, 70.0)],
            outline: [channel(20.0, 50.0), channel(15.0, 40.0), channel(15.0, 40.0)],
        };
        let supported = (0..TARGET_MORPH_COUNT as u8).filter(|_| rng.unit() < support_probability).collect();
        Self { seed, palette, proportions, supported }
    }

    pub fn from_seed(seed: u64) -> Self {
        Self::generate(seed, 0.75)
    }

    /// Mid-range proportions, used for the default landmark model.
    pub fn canonical() -> Self {
        let mut ch = Self::from_seed(0);
        ch.proportions = Proportions::mid();
        ch.supported = (0..TARGET_MORPH_COUNT as u8).collect();
        ch
    }

    pub fn with_supported(mut self, supported: impl IntoIterator<Item = u8>) -> Self {
        self.supported = supported.into_iter().collect();
        self
    }

    pub fn rig(&self) -> ControlRig {
        ControlRig::new(&self.proportions)
    }
}

/// Drawing regions, in label order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum Region {
    Background = 0,
    Hair,
    Skin,
    Eye,
    Iris,
    Brow,
    MouthInner,
    MouthLine,
}

impl Region {
    pub fn is_eye_interior(self) -> bool {
        matches!(self, Region::Eye | Region::Iris)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum Shader {
    /// Flat fill with a one-pixel outline.
    Flat = 1,
    /// Two-band toon shading with outline.
    Toon = 2,
    /// Paper-tinted fill with a heavy outline.
    Sketch = 3,
    /// Soft vertical gradient, no outline.
    Gradient = 4,
}

impl Shader {
    pub const ALL: [Shader; 4] = [Shader::Flat, Shader::Toon, Shader::Sketch, Shader::Gradient];

    pub fn id(self) -> u8 {
        self as u8
    }
}

impl TryFrom<u8> for Shader {
    type Error = Error;
    fn try_from(v: u8) -> Result<Self> {
        match v {
            1 => Ok(Shader::Flat),
            2 => Ok(Shader::Toon),
            3 => Ok(Shader::Sketch),
            4 => Ok(Shader::Gradient),
            _ => Err(Error::invalid(format!("unsupported shader id {v} (expected 1..=4)"))),
        }
    }
}

impl From<Shader> for u8 {
    fn from(s: Shader) -> u8 {
        s as u8
    }
}

pub fn check_resolution(res: u32) -> Result<()> {
    if SUPPORTED_RESOLUTIONS.contains(&res) {
        Ok(())
    } else {
        Err(Error::invalid(format!("unsupported resolution {res} (expected 256, 512 or 1024)")))
    }
}

type P3 = [f64; 3];

/// Neutral landmark geometry, static shapes and per-slot deformation rules.
#[derive(Debug, Clone)]
pub struct ControlRig {
    neutral: [[f64; 2]; LANDMARK_COUNT],
    depth: [f64; LANDMARK_COUNT],
    rules: Vec<SemanticEditRule>,
    face: Vec<P3>,
    hair_back: Vec<P3>,
    bangs: Vec<P3>,
    neck: Vec<P3>,
    half_width: f64,
    brow_thickness: f64,
}

fn surface_depth(half_width: f64, x: f64, y: f64) -> f64 {
    let ax = half_width + 0.06;
    let ay = 0.62;
    let q = 1.0 - (x / ax) * (x / ax) - (y / ay) * (y / ay);
    HEAD_DEPTH * q.max(0.0).sqrt()
}

/// Closes a half outline that runs from a point on the axis down the +x side
/// and back to the axis, appending its mirror image.
fn mirror_closed(half: Vec<P3>) -> Vec<P3> {
    let mut out = half.clone();
    for p in half[1..half.len() - 1].iter().rev() {
        out.push([-p[0], p[1], p[2]]);
    }
    out
}

fn quad_bezier(a: P3, mid: P3, b: P3, segments: usize) -> Vec<P3> {
    // Control point chosen so the curve passes through `mid` at t = 1/2.
    let c =
        [2.0 * mid[0] - 0.5 * (a[0] + b[0]), 2.0 * mid[1] - 0.5 * (a[1] + b[1]), 2.0 * mid[2] - 0.5 * (a[2] + b[2])];
    (0..=segments)
        .map(|k| {
            let t = k as f64 / segments as f64;
            let (u0, u1, u2) = ((1.0 - t) * (1.0 - t), 2.0 * t * (1.0 - t), t * t);
            [u0 * a[0] + u1 * c[0] + u2 * b[0], u0 * a[1] + u1 * c[1] + u2 * b[1], u0 * a[2] + u1 * c[2] + u2 * b[2]]
        })
        .collect()
}

fn offset(p: P3, dy: f64) -> P3 {
    [p[0], p[1] + dy, p[2]]
}

impl ControlRig {
    pub fn new(prop: &Proportions) -> Self {
        let hw = snap(0.5 * prop.face_aspect);
        let es = prop.eye_scale;
        let mw = snap(prop.mouth_half_width);

        let mut n = [[0.0f64; 2]; LANDMARK_COUNT];
        let ex = snap(0.43 * hw);
        let ey = -0.04;
        let ew = snap(0.085 * es);
        let eye_up = snap(0.065 * es);
        let eye_lo = snap(0.035 * es);
        n[lm::EYE_L_INNER] = [ex - ew, ey];
        n[lm::EYE_L_OUTER] = [ex + ew, snap(ey + 0.01 * es)];
        n[lm::EYE_L_UPPER] = [ex, ey + eye_up];
        n[lm::EYE_L_LOWER] = [ex, ey - eye_lo];
        let by = ey + 0.16;
        n[lm::BROW_L_INNER] = [snap(ex - 0.075), by - 0.005];
        n[lm::BROW_L_MID] = [ex, by + 0.02];
        n[lm::BROW_L_OUTER] = [snap(ex + 0.09), by];
        let my = -0.29;
        n[lm::MOUTH_CORNER_L] = [mw, my];
        n[lm::MOUTH_UPPER_L] = [snap(0.5 * mw), my + 0.008];
        n[lm::MOUTH_LOWER_L] = [snap(0.5 * mw), my - 0.004];

        // Face outline, forehead to chin down the left side.
        let segments = 16;
        let mut face_half = Vec::with_capacity(segments + 1);
        for k in 0..=segments {
            let (s, c) = sin_cos(std::f64::consts::FRAC_PI_2 - k as f64 * std::f64::consts::PI / segments as f64);
            let taper = if s < 0.0 { 1.0 - 0.35 * s * s } else { 1.0 };
            let x = if k == 0 || k == segments { 0.0 } else { snap(hw * c * taper) };
            let y = if k == 0 {
                0.5
            } else if k == segments {
                CHIN
            } else {
                snap(0.5 * s)
            };
            face_half.push([x, y, surface_depth(hw, x, y)]);
        }
        let jaw = face_half[12];
        n[lm::JAW_L] = [jaw[0], jaw[1]];
        n[lm::CHIN] = [0.0, CHIN];
        n[lm::FOREHEAD] = [0.0, 0.5];

        // Right side mirrors left exactly.
        for (i, &j) in MIRROR.iter().enumerate() {
            if j < i {
                n[i] = [-n[j][0], n[j][1]];
            }
        }
        for p in n.iter_mut() {
            *p = [snap(p[0]), snap(p[1])];
        }
        let mut depth = [0.0; LANDMARK_COUNT];
        for i in 0..LANDMARK_COUNT {
            depth[i] = surface_depth(hw, n[i][0], n[i][1]);
        }

        let rules = Self::build_rules(&n, es, mw);

        // Hair behind the head.
        let hair_rx = hw + 0.09;
        let mut hair_half = vec![[0.0, HAIR_TOP, -0.15]];
        for k in 1..=10 {
            let (s, c) = sin_cos(std::f64::consts::FRAC_PI_2 - k as f64 * 0.17);
            hair_half.push([snap(hair_rx * c), snap(0.08 + 0.56 * s), -0.15]);
        }
        hair_half.push([snap(hair_rx * 0.92), -0.3, -0.15]);
        hair_half.push([snap(hw * 0.6), -0.2, -0.15]);
        hair_half.push([0.0, -0.1, -0.15]);
        let hair_back = mirror_closed(hair_half);

        // Fringe over the forehead, with a zig-zag lower edge.
        let bang_rx = hw + 0.03;
        let mut bangs_half = vec![[0.0, HAIR_TOP, 0.0]];
        for k in 1..=7 {
            let (s, c) = sin_cos(std::f64::consts::FRAC_PI_2 - k as f64 * 0.19);
            let (x, y) = (snap(bang_rx * c), snap(0.08 + 0.56 * s));
            bangs_half.push([x, y, surface_depth(hw, x, y) + 0.02]);
        }
        let fringe_w = hw - 0.02;
        for k in 0..=4 {
            let x = fringe_w * (4 - k) as f64 / 4.0;
            let y = if k % 2 == 1 { 0.25 } else { 0.33 };
            bangs_half.push([snap(x), y, surface_depth(hw, x, y) + 0.02]);
        }
        let bangs = mirror_closed(bangs_half);

        let neck = vec![[0.13, -0.3, -0.1], [0.13, -1.5, -0.1], [-0.13, -1.5, -0.1], [-0.13, -0.3, -0.1]];

        Self {
            neutral: n,
            depth,
            rules,
            face: mirror_closed(face_half),
            hair_back,
            bangs,
            neck,
            half_width: hw,
            brow_thickness: snap(prop.brow_thickness),
        }
    }

    fn build_rules(n: &[[f64; 2]; LANDMARK_COUNT], es: f64, mw: f64) -> Vec<SemanticEditRule> {
        let shift = |landmark, dx: f64, dy: f64| LandmarkShift { landmark, dx: snap(dx), dy: snap(dy) };
        let gap = n[lm::EYE_L_LOWER][1] - n[lm::EYE_L_UPPER][1];
        let left: [Vec<LandmarkShift>; 6] = [
            // closed: upper lid meets lower lid
            vec![shift(lm::EYE_L_UPPER, 0.0, gap)],
            // unimpressed: half-lowered upper lid
            vec![shift(lm::EYE_L_UPPER, 0.0, 0.5 * gap)],
            // surprised
            vec![shift(lm::EYE_L_UPPER, 0.0, 0.025 * es), shift(lm::EYE_L_LOWER, 0.0, -0.01 * es)],
            // angry
            vec![
                shift(lm::BROW_L_INNER, -0.012, -0.05),
                shift(lm::BROW_L_MID, 0.0, -0.02),
                shift(lm::BROW_L_OUTER, 0.0, 0.015),
            ],
            // raised
            vec![
                shift(lm::BROW_L_INNER, 0.0, 0.05),
                shift(lm::BROW_L_MID, 0.0, 0.06),
                shift(lm::BROW_L_OUTER, 0.0, 0.045),
            ],
            // lowered
            vec![
                shift(lm::BROW_L_INNER, 0.0, -0.035),
                shift(lm::BROW_L_MID, 0.0, -0.04),
                shift(lm::BROW_L_OUTER, 0.0, -0.03),
            ],
        ];
        let mut rules = Vec::with_capacity(EXPR_DIM);
        for (sem, shifts) in left.into_iter().enumerate() {
            let mirrored =
                shifts.iter().map(|s| LandmarkShift { landmark: MIRROR[s.landmark], dx: -s.dx, dy: s.dy }).collect();
            rules.push(SemanticEditRule { slot: 2 * sem, displacements: shifts });
            rules.push(SemanticEditRule { slot: 2 * sem + 1, displacements: mirrored });
        }
        // Mouth vowels: (upper dy, lower dy, corner inward dx, lip inward dx)
        let vowels = [
            (0.015, -0.11, 0.12 * mw, 0.0),
            (0.008, -0.06, -0.15 * mw, 0.0),
            (0.004, -0.03, -0.28 * mw, 0.0),
            (0.02, -0.09, 0.35 * mw, 0.1 * mw),
            (0.01, -0.035, 0.5 * mw, 0.15 * mw),
        ];
        for (k, (up, low, corner_in, lip_in)) in vowels.into_iter().enumerate() {
            let displacements = vec![
                shift(lm::MOUTH_CORNER_L, -corner_in, 0.0),
                shift(lm::MOUTH_CORNER_R, corner_in, 0.0),
                shift(lm::MOUTH_UPPER_L, -lip_in, up),
                shift(lm::MOUTH_UPPER_R, lip_in, up),
                shift(lm::MOUTH_LOWER_L, -lip_in, low),
                shift(lm::MOUTH_LOWER_R, lip_in, low),
            ];
            rules.push(SemanticEditRule { slot: 12 + k, displacements });
        }
        rules
    }

    pub fn neutral_landmarks(&self) -> [[f64; 2]; LANDMARK_COUNT] {
        self.neutral
    }

    /// Deformation rules in slot order.
    pub fn rules(&self) -> &[SemanticEditRule] {
        &self.rules
    }

    /// Frontal landmarks after expression deformation.
    pub fn deformed(&self, expr: &[f64; EXPR_DIM]) -> [[f64; 2]; LANDMARK_COUNT] {
        let mut out = self.neutral;
        for rule in &self.rules {
            let a = expr[rule.slot];
            if a == 0.0 {
                continue;
            }
            for s in &rule.displacements {
                out[s.landmark][0] += a * s.dx;
                out[s.landmark][1] += a * s.dy;
            }
        }
        out
    }

    fn deformed_3d(&self, expr: &[f64; EXPR_DIM]) -> [P3; LANDMARK_COUNT] {
        let d = self.deformed(expr);
        let mut out = [[0.0; 3]; LANDMARK_COUNT];
        for i in 0..LANDMARK_COUNT {
            out[i] = [d[i][0], d[i][1], self.depth[i]];
        }
        out
    }

    /// Shapes in paint order: `(region, clip-to region, rotates with head, outline)`.
    fn layers(&self, expr: &[f64; EXPR_DIM]) -> Vec<(Region, Option<Region>, bool, Vec<P3>)> {
        let l = self.deformed_3d(expr);
        let neutral = self.deformed_3d(&[0.0; EXPR_DIM]);
        let mut layers = vec![
            (Region::Hair, None, true, self.hair_back.clone()),
            (Region::Skin, None, false, self.neck.clone()),
            (Region::Skin, None, true, self.face.clone()),
        ];
        for (inner, outer, upper, lower) in [
            (lm::EYE_L_INNER, lm::EYE_L_OUTER, lm::EYE_L_UPPER, lm::EYE_L_LOWER),
            (lm::EYE_R_INNER, lm::EYE_R_OUTER, lm::EYE_R_UPPER, lm::EYE_R_LOWER),
        ] {
            let mut poly = quad_bezier(l[inner], l[upper], l[outer], 8);
            let mut low = quad_bezier(l[inner], l[lower], l[outer], 8);
            low.reverse();
            poly.extend_from_slice(&low[1..low.len() - 1]);
            layers.push((Region::Eye, None, true, poly));

            let c = neutral[upper];
            let r = 0.55 * (neutral[upper][1] - neutral[lower][1]);
            let cy = 0.5 * (neutral[upper][1] + neutral[lower][1]);
            let iris = (0..16)
                .map(|k| {
                    let (s, co) = sin_cos(k as f64 * std::f64::consts::PI / 8.0);
                    [c[0] + 0.8 * r * co, cy + r * s, c[2] + 0.005]
                })
                .collect();
            layers.push((Region::Iris, Some(Region::Eye), true, iris));
        }
        let t = 0.5 * self.brow_thickness;
        for (inner, mid, outer) in
            [(lm::BROW_L_INNER, lm::BROW_L_MID, lm::BROW_L_OUTER), (lm::BROW_R_INNER, lm::BROW_R_MID, lm::BROW_R_OUTER)]
        {
            let mut poly = quad_bezier(offset(l[inner], t), offset(l[mid], t), offset(l[outer], t), 6);
            let mut low = quad_bezier(offset(l[inner], -t), offset(l[mid], -t), offset(l[outer], -t), 6);
            low.reverse();
            poly.extend(low);
            layers.push((Region::Brow, None, true, poly));
        }
        layers.push((
            Region::MouthInner,
            None,
            true,
            vec![
                l[lm::MOUTH_CORNER_L],
                l[lm::MOUTH_UPPER_L],
                l[lm::MOUTH_UPPER_R],
                l[lm::MOUTH_CORNER_R],
                l[lm::MOUTH_LOWER_R],
                l[lm::MOUTH_LOWER_L],
            ],
        ));
        let lip = 0.006;
        let top = [lm::MOUTH_CORNER_L, lm::MOUTH_UPPER_L, lm::MOUTH_UPPER_R, lm::MOUTH_CORNER_R];
        let mut line: Vec<P3> = top.iter().map(|&i| offset(l[i], lip)).collect();
        line.extend(top.iter().rev().map(|&i| offset(l[i], -lip)));
        layers.push((Region::MouthLine, None, true, line));
        layers.push((Region::Hair, None, true, self.bangs.clone()));
        layers
    }
}

/// Orthographic camera framed on the neck pivot.
#[derive(Debug, Clone, Copy)]
struct Camera {
    resolution: u32,
    scale: f64,
    center_y: f64,
}

impl Camera {
    fn new(resolution: u32) -> Self {
        Self {
            resolution,
            scale: FRAME_FILL * resolution as f64 / (HAIR_TOP - CHIN),
            center_y: NECK_PIVOT[1] + FRAME_CENTER_ABOVE_PIVOT,
        }
    }

    /// Offset from the image centre in pixels, y down.
    fn offset(&self, p: P3) -> [f64; 2] {
        [p[0] * self.scale, -(p[1] - self.center_y) * self.scale]
    }

    fn to_pixel(self, p: P3) -> [f64; 2] {
        let o = self.offset(p);
        let half = 0.5 * self.resolution as f64;
        [half + o[0], half + o[1]]
    }

    fn to_fixed(self, p: P3) -> FixedPoint {
        let o = self.offset(p);
        FixedPoint { x: to_fixed(o[0]), y: to_fixed(o[1]) }
    }
}

#[derive(Debug, Clone, Copy)]
struct HeadPose {
    rotation: Option<angles::Mat3>,
}

impl HeadPose {
    fn new(angles_deg: &[f64; 3]) -> Self {
        let rotation = if angles_deg.iter().all(|a| *a == 0.0) {
            None
        } else {
            Some(angles::head_rotation(angles_deg[0], angles_deg[1], angles_deg[2]))
        };
        Self { rotation }
    }

    fn apply(&self, p: P3) -> P3 {
        match &self.rotation {
            None => p,
            Some(r) => {
                let v = [p[0] - NECK_PIVOT[0], p[1] - NECK_PIVOT[1], p[2] - NECK_PIVOT[2]];
                let q = angles::apply(r, v);
                [q[0] + NECK_PIVOT[0], q[1] + NECK_PIVOT[1], q[2] + NECK_PIVOT[2]]
            }
        }
    }
}

/// Projected pixel position of the neck pivot.
pub fn neck_pivot_pixel(resolution: u32) -> [f64; 2] {
    Camera::new(resolution).to_pixel(NECK_PIVOT)
}

/// Landmarks in face units after deformation and head rotation, projected
/// orthographically (depth dropped).
pub fn landmarks(ch: &CharacterDescriptor, p: &PoseVector) -> [[f64; 2]; LANDMARK_COUNT] {
    landmarks_with_rig(&ch.rig(), p)
}

pub fn landmarks_with_rig(rig: &ControlRig, p: &PoseVector) -> [[f64; 2]; LANDMARK_COUNT] {
    let pose = HeadPose::new(&p.angles_deg);
    let pts = rig.deformed_3d(&p.expr);
    let mut out = [[0.0; 2]; LANDMARK_COUNT];
    for i in 0..LANDMARK_COUNT {
        let q = pose.apply(pts[i]);
        out[i] = [q[0], q[1]];
    }
    out
}

#[derive(Debug, Clone)]
pub struct RenderedFrame {
    pub image: RgbaImage,
    /// Region label per pixel, row-major.
    pub labels: Vec<Region>,
    /// Landmark positions in pixel coordinates (x right, y down).
    pub landmarks: [[f64; 2]; LANDMARK_COUNT],
    pub shader: Shader,
    pub resolution: u32,
}

impl RenderedFrame {
    pub fn alpha_mask(&self) -> Vec<bool> {
        self.image.pixels().map(|p| p.0[3] > 0).collect()
    }

    pub fn count_region(&self, pred: impl Fn(Region) -> bool) -> usize {
        self.labels.iter().filter(|r| pred(**r)).count()
    }

    pub fn eye_pixel_count(&self) -> usize {
        self.count_region(Region::is_eye_interior)
    }

    pub fn pixel_hash(&self) -> String {
        pixel_hash(&self.image)
    }
}

/// SHA-256 over width, height and raw RGBA bytes.
pub fn pixel_hash(img: &RgbaImage) -> String {
    let mut h = Sha256::new();
    h.update(img.width().to_le_bytes());
    h.update(img.height().to_le_bytes());
    h.update(img.as_raw());
    hex::encode(h.finalize())
}

pub fn render(ch: &CharacterDescriptor, p: &PoseVector, shader: u8, resolution: u32) -> Result<RenderedFrame> {
    render_with_rig(ch, &ch.rig(), p, shader, resolution)
}

pub fn render_with_rig(
    ch: &CharacterDescriptor,
    rig: &ControlRig,
    p: &PoseVector,
    shader: u8,
    resolution: u32,
) -> Result<RenderedFrame> {
    let shader = Shader::try_from(shader)?;
    check_resolution(resolution)?;
    crate::pose::validate(p)?;

    let res = resolution as usize;
    let camera = Camera::new(resolution);
    let pose = HeadPose::new(&p.angles_deg);
    let mut labels = vec![Region::Background; res * res];

    for (region, clip, rotates, poly) in rig.layers(&p.expr) {
        let fixed: Vec<FixedPoint> =
            poly.iter().map(|&v| camera.to_fixed(if rotates { pose.apply(v) } else { v })).collect();
        fill_polygon(&fixed, res, |c, r| {
            let slot = &mut labels[r * res + c];
            if clip.is_none_or(|want| *slot == want) {
                *slot = region;
            }
        });
    }

    let mut lms = [[0.0; 2]; LANDMARK_COUNT];
    let pts = rig.deformed_3d(&p.expr);
    for i in 0..LANDMARK_COUNT {
        lms[i] = camera.to_pixel(pose.apply(pts[i]));
    }

    let head_center = camera.to_fixed(pose.apply([0.0, camera.center_y, 0.0]));
    let radii = [
        (rig.half_width + 0.06) * camera.scale * crate::raster::SUBPIXEL as f64,
        0.62 * camera.scale * crate::raster::SUBPIXEL as f64,
    ];
    let image = shade(ch, shader, &labels, res, head_center, radii);
    Ok(RenderedFrame { image, labels, landmarks: lms, shader, resolution })
}

fn base_color(pal: &Palette, r: Region) -> Rgb {
    match r {
        Region::Background => [0, 0, 0],
        Region::Hair => pal.hair,
        Region::Skin => pal.skin,
        Region::Eye => pal.eye,
        Region::Iris => pal.iris,
        Region::Brow => pal.brow,
        Region::MouthInner => pal.mouth,
        Region::MouthLine => pal.outline,
    }
}

fn scale_color(c: Rgb, f: f64) -> Rgb {
    c.map(|v| (v as f64 * f).round().clamp(0.0, 255.0) as u8)
}

fn mix(a: Rgb, b: Rgb, t: f64) -> Rgb {
    let mut out = [0u8; 3];
    for i in 0..3 {
        out[i] = ((1.0 - t) * a[i] as f64 + t * b[i] as f64).round().clamp(0.0, 255.0) as u8;
    }
    out
}

const PAPER: Rgb = [245, 240, 228];

fn shade(
    ch: &CharacterDescriptor,
    shader: Shader,
    labels: &[Region],
    res: usize,
    head_center: FixedPoint,
    radii: [f64; 2],
) -> RgbaImage {
    let at = |c: isize, r: isize| -> Region {
        if c < 0 || r < 0 || c >= res as isize || r >= res as isize {
            Region::Background
        } else {
            labels[r as usize * res + c as usize]
        }
    };
    let mut edge = vec![false; res * res];
    for r in 0..res {
        for c in 0..res {
            let here = labels[r * res + c];
            if here == Region::Background {
                continue;
            }
            let (ci, ri) = (c as isize, r as isize);
            edge[r * res + c] =
                [(ci - 1, ri), (ci + 1, ri), (ci, ri - 1), (ci, ri + 1)].iter().any(|&(x, y)| at(x, y) != here);
        }
    }
    if shader == Shader::Sketch {
        let thin = edge.clone();
        for r in 0..res {
            for c in 0..res {
                if labels[r * res + c] == Region::Background || thin[r * res + c] {
                    continue;
                }
                let near = (r.saturating_sub(1)..=(r + 1).min(res - 1))
                    .any(|y| (c.saturating_sub(1)..=(c + 1).min(res - 1)).any(|x| thin[y * res + x]));
                edge[r * res + c] = near;
            }
        }
    }

    let pal = &ch.palette;
    let mut img = RgbaImage::new(res as u32, res as u32);
    for r in 0..res {
        for c in 0..res {
            let region = labels[r * res + c];
            if region == Region::Background {
                continue;
            }
            let base = base_color(pal, region);
            let rgb = match shader {
                Shader::Flat => {
                    if edge[r * res + c] {
                        pal.outline
                    } else {
                        base
                    }
                }
                Shader::Toon => {
                    if edge[r * res + c] {
                        pal.outline
                    } else {
                        let dx = (pixel_center(c, res) - head_center.x) as f64 / radii[0];
                        let dy = (pixel_center(r, res) - head_center.y) as f64 / radii[1];
                        let nz = (1.0 - dx * dx - dy * dy).max(0.0).sqrt();
                        scale_color(base, if nz >= 0.5 { 1.0 } else { 0.75 })
                    }
                }
                Shader::Sketch => {
                    if edge[r * res + c] {
                        pal.outline
                    } else {
                        mix(base, PAPER, 0.55)
                    }
                }
                Shader::Gradient => {
                    let v = (r as f64 + 0.5) / res as f64;
                    scale_color(base, 1.08 - 0.32 * v)
                }
            };
            img.put_pixel(c as u32, r as u32, image::Rgba([rgb[0], rgb[1], rgb[2], 255]));
        }
    }
    img
}

/// Render request for an external renderer adapter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RenderJob {
    pub model_id: String,
    pub pose: PoseVector,
    pub shader: Shader,
    pub resolution: u32,
    pub seed: u64,
}

/// Tab-separated `name x y` rows, one per landmark.
pub fn landmark_table(points: &[[f64; 2]; LANDMARK_COUNT]) -> String {
    let mut s = String::from("landmark\tx\ty\n");
    for (name, p) in lm::NAMES.iter().zip(points) {
        s.push_str(&format!("{name}\t{}\t{}\n", p[0], p[1]));
    }
    s
}
