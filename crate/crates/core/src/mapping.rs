//! Pose-vector to morphable-model parameter mapping via a landmark proxy.
//!
//! Each of the 17 expression slots is expressed as a hand-authored landmark
//! edit of the mean face. A linear landmark basis (the 2D stand-in for an
//! expression basis) is then fitted to every edited landmark set by ridge
//! regression, giving one 64-dim coefficient row per slot. Stacked, the rows
//! form `phi` (17×64), and a pose maps to
//! `[b · phi (64) | angles in radians (3) | zero translation (3)]`.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::angles::deg_to_rad;
use crate::error::{Error, Result};
use crate::head::{self, CharacterDescriptor, LANDMARK_COUNT, MIRROR};
use crate::pose::{ANGLE_DIM, EXPR_DIM};
use crate::rng::Stream;

pub const BASIS_DIM: usize = 64;
pub const MAPPED_DIM: usize = BASIS_DIM + 2 * ANGLE_DIM;
pub const COORD_DIM: usize = 2 * LANDMARK_COUNT;

pub const DEFAULT_LAMBDA: f64 = 1e-2;
pub const DEFAULT_BASIS_SEED: u64 = 0x5eed_ba5e;
/// Largest accepted condition number of the factored Gram matrix.
pub const MAX_CONDITION: f64 = 1e12;
/// Required bound on the objective's gradient norm at the returned solution.
pub const GRADIENT_TOLERANCE: f64 = 1e-8;
/// Synthetic bump widths are this fraction range of the distance from the
/// bump centre to the nearest other landmark, capped at [`BUMP_MAX_WIDTH`].
pub const BUMP_WIDTH_FRACTION: (f64, f64) = (0.3, 0.45);
pub const BUMP_MAX_WIDTH: f64 = 0.03;
const BUMP_MIN_WIDTH: f64 = 0.005;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LandmarkShift {
    pub landmark: usize,
    pub dx: f64,
    pub dy: f64,
}

/// Full-intensity landmark displacements for one expression slot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SemanticEditRule {
    pub slot: usize,
    pub displacements: Vec<LandmarkShift>,
}

impl SemanticEditRule {
    pub fn identity(slot: usize) -> Self {
        Self { slot, displacements: Vec::new() }
    }

    /// The same edit reflected onto the other side of the face.
    pub fn mirrored(&self, slot: usize) -> Self {
        Self {
            slot,
            displacements: self
                .displacements
                .iter()
                .map(|s| LandmarkShift { landmark: MIRROR[s.landmark], dx: -s.dx, dy: s.dy })
                .collect(),
        }
    }
}

pub fn rules_hash(rules: &[SemanticEditRule]) -> String {
    let mut h = Sha256::new();
    for r in rules {
        h.update((r.slot as u64).to_le_bytes());
        for s in &r.displacements {
            h.update((s.landmark as u64).to_le_bytes());
            h.update(s.dx.to_bits().to_le_bytes());
            h.update(s.dy.to_bits().to_le_bytes());
        }
        h.update([0xff]);
    }
    hex::encode(h.finalize())
}

/// Mean landmarks, linear landmark basis and ridge weight.
#[derive(Debug, Clone, PartialEq)]
pub struct LandmarkModel {
    /// x/y interleaved, length `2L`.
    pub mean: DVector<f64>,
    /// `2L × 64`.
    pub basis: DMatrix<f64>,
    pub lambda: f64,
}

impl LandmarkModel {
    pub fn new(mean: DVector<f64>, basis: DMatrix<f64>, lambda: f64) -> Result<Self> {
        if basis.nrows() != mean.len() {
            return Err(Error::invalid(format!(
                "basis has {} rows but mean has {} coordinates",
                basis.nrows(),
                mean.len()
            )));
        }
        if basis.ncols() != BASIS_DIM {
            return Err(Error::invalid(format!("basis needs {BASIS_DIM} columns, got {}", basis.ncols())));
        }
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(Error::invalid(format!("regularization weight must be positive, got {lambda}")));
        }
        if let Some(i) = mean.iter().chain(basis.iter()).position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index: i });
        }
        Ok(Self { mean, basis, lambda })
    }

    pub fn flatten(points: &[[f64; 2]; LANDMARK_COUNT]) -> DVector<f64> {
        DVector::from_iterator(COORD_DIM, points.iter().flat_map(|p| [p[0], p[1]]))
    }

    /// Mirror-paired bump basis over the given mean landmarks.
    ///
    /// Columns come in pairs `(2j, 2j + 1)` that are exact reflections of each
    /// other. Column `2j` displaces every landmark `i` along a unit direction
    /// `d_j` by `exp(-|l_i - c_j|^2 / (2 w_j^2))`. The first pairs are centred
    /// on each left-side landmark twice (roughly orthogonal directions) and on
    /// each midline landmark once; the remainder have centres jittered around
    /// random landmarks. Widths scale with the local landmark spacing (see
    /// [`BUMP_WIDTH_FRACTION`]) so neighbouring bumps stay distinguishable.
    pub fn synthetic_basis(mean: &[[f64; 2]; LANDMARK_COUNT], seed: u64) -> DMatrix<f64> {
        let mut rng = Stream::new("basis", "", seed, 0);
        let left: Vec<usize> = (0..LANDMARK_COUNT).filter(|&i| mean[i][0] > 0.0).collect();
        let midline: Vec<usize> = (0..LANDMARK_COUNT).filter(|&i| mean[i][0] == 0.0).collect();

        let width = |rng: &mut Stream, c: [f64; 2]| {
            let nearest = mean
                .iter()
                .map(|p| ((p[0] - c[0]).powi(2) + (p[1] - c[1]).powi(2)).sqrt())
                .filter(|d| *d > 1e-9)
                .fold(f64::INFINITY, f64::min);
            (rng.uniform(BUMP_WIDTH_FRACTION.0, BUMP_WIDTH_FRACTION.1) * nearest).clamp(BUMP_MIN_WIDTH, BUMP_MAX_WIDTH)
        };
        let mut bumps: Vec<([f64; 2], f64, f64)> = Vec::with_capacity(BASIS_DIM / 2);
        for &i in &left {
            let theta = rng.uniform(0.0, std::f64::consts::PI);
            for k in 0..2 {
                let w = width(&mut rng, mean[i]);
                bumps.push((mean[i], w, theta + k as f64 * std::f64::consts::FRAC_PI_2));
            }
        }
        for &i in &midline {
            let w = width(&mut rng, mean[i]);
            bumps.push((mean[i], w, rng.uniform(0.2, 1.3)));
        }
        while bumps.len() < BASIS_DIM / 2 {
            let i = rng.below(LANDMARK_COUNT as u64) as usize;
            let c = [mean[i][0].abs() + rng.uniform(-0.03, 0.03), mean[i][1] + rng.uniform(-0.03, 0.03)];
            let w = width(&mut rng, c);
            bumps.push((c, w, rng.uniform(0.0, 2.0 * std::f64::consts::PI)));
        }
        bumps.truncate(BASIS_DIM / 2);

        let mut basis = DMatrix::zeros(COORD_DIM, BASIS_DIM);
        for (j, (c, w, theta)) in bumps.into_iter().enumerate() {
            let (s, co) = crate::angles::sin_cos(theta);
            for (col, sign) in [(2 * j, 1.0), (2 * j + 1, -1.0)] {
                let (cx, dx) = (sign * c[0], sign * co);
                for i in 0..LANDMARK_COUNT {
                    let ex = mean[i][0] - cx;
                    let ey = mean[i][1] - c[1];
                    let g = (-(ex * ex + ey * ey) / (2.0 * w * w)).exp();
                    basis[(2 * i, col)] = dx * g;
                    basis[(2 * i + 1, col)] = s * g;
                }
            }
        }
        basis
    }

    /// Landmark model and edit rules of a character's rig.
    pub fn for_character(
        ch: &CharacterDescriptor,
        lambda: f64,
        basis_seed: u64,
    ) -> Result<(Self, Vec<SemanticEditRule>)> {
        let rig = ch.rig();
        let mean = rig.neutral_landmarks();
        let basis = Self::synthetic_basis(&mean, basis_seed);
        Ok((Self::new(Self::flatten(&mean), basis, lambda)?, rig.rules().to_vec()))
    }

    /// Canonical character, default basis seed and default weight.
    pub fn default_model() -> (Self, Vec<SemanticEditRule>) {
        Self::for_character(&CharacterDescriptor::canonical(), DEFAULT_LAMBDA, DEFAULT_BASIS_SEED)
            .expect("default model is valid")
    }

    pub fn with_lambda(&self, lambda: f64) -> Result<Self> {
        Self::new(self.mean.clone(), self.basis.clone(), lambda)
    }

    pub fn landmark_count(&self) -> usize {
        self.mean.len() / 2
    }

    /// SHA-256 over mean and basis bits.
    pub fn basis_hash(&self) -> String {
        let mut h = Sha256::new();
        h.update((self.mean.len() as u64).to_le_bytes());
        for v in self.mean.iter() {
            h.update(v.to_bits().to_le_bytes());
        }
        for v in self.basis.iter() {
            h.update(v.to_bits().to_le_bytes());
        }
        hex::encode(h.finalize())
    }

    /// Ridge objective `|mean + B beta - target|^2 + lambda |beta|^2`.
    pub fn objective(&self, beta: &DVector<f64>, target: &DVector<f64>) -> f64 {
        let r = &self.mean + &self.basis * beta - target;
        r.norm_squared() + self.lambda * beta.norm_squared()
    }

    /// Half-gradient of [`Self::objective`]: `B^T (mean + B beta - target) + lambda beta`.
    pub fn gradient(&self, beta: &DVector<f64>, target: &DVector<f64>) -> DVector<f64> {
        let r = &self.mean + &self.basis * beta - target;
        self.basis.transpose() * r + self.lambda * beta
    }

    /// Writes the basis as a table: one row per coordinate, first column the
    /// mean, then 64 basis columns.
    pub fn save_basis(&self, path: &Path) -> Result<()> {
        let mut s = format!("# posekit landmark basis v1\n# coords={} cols={}\n", self.mean.len(), BASIS_DIM);
        for r in 0..self.mean.len() {
            let _ = write!(s, "{}", self.mean[r]);
            for c in 0..BASIS_DIM {
                let _ = write!(s, "\t{}", self.basis[(r, c)]);
            }
            s.push('\n');
        }
        std::fs::write(path, s).map_err(|e| Error::io(path, e))
    }

    pub fn load_basis(path: &Path, lambda: f64) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let rows = parse_table(&text, path)?;
        if rows.is_empty() || rows.len() % 2 != 0 {
            return Err(Error::format(path, "basis needs an even, non-zero number of coordinate rows"));
        }
        let mut mean = DVector::zeros(rows.len());
        let mut basis = DMatrix::zeros(rows.len(), BASIS_DIM);
        for (r, row) in rows.iter().enumerate() {
            if row.len() != BASIS_DIM + 1 {
                return Err(Error::format(
                    path,
                    format!("row {r}: expected {} values, got {}", BASIS_DIM + 1, row.len()),
                ));
            }
            mean[r] = row[0];
            for c in 0..BASIS_DIM {
                basis[(r, c)] = row[c + 1];
            }
        }
        Self::new(mean, basis, lambda)
    }
}

fn parse_table(text: &str, path: &Path) -> Result<Vec<Vec<f64>>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.starts_with('#') && !l.trim().is_empty())
        .map(|(n, l)| {
            l.split('\t')
                .map(|v| v.trim().parse::<f64>().map_err(|e| Error::format(path, format!("line {}: {e}", n + 1))))
                .collect()
        })
        .collect()
}

/// Mean landmarks displaced by a rule at full intensity.
pub fn target_landmarks(model: &LandmarkModel, rule: &SemanticEditRule) -> Result<DVector<f64>> {
    let mut out = model.mean.clone();
    for s in &rule.displacements {
        if s.landmark >= model.landmark_count() {
            return Err(Error::invalid(format!(
                "rule for slot {} references landmark {} (model has {})",
                rule.slot,
                s.landmark,
                model.landmark_count()
            )));
        }
        out[2 * s.landmark] += s.dx;
        out[2 * s.landmark + 1] += s.dy;
    }
    Ok(out)
}

/// Factored ridge system for one model.
///
/// `(B^T B + lambda I)^-1 B^T = B^T (B B^T + lambda I)^-1`, so the smaller of
/// the two Gram matrices is factored. For the usual wide basis (48
/// coordinates, 64 columns) this is the 48×48 dual system.
pub struct RidgeSolver<'a> {
    model: &'a LandmarkModel,
    dual: bool,
    gram: DMatrix<f64>,
    chol: nalgebra::Cholesky<f64, nalgebra::Dyn>,
    pub condition: f64,
}

impl<'a> RidgeSolver<'a> {
    pub fn new(model: &'a LandmarkModel) -> Result<Self> {
        let b = &model.basis;
        let dual = b.nrows() < b.ncols();
        let mut gram = if dual { b * b.transpose() } else { b.transpose() * b };
        for i in 0..gram.nrows() {
            gram[(i, i)] += model.lambda;
        }
        let eig = SymmetricEigen::new(gram.clone()).eigenvalues;
        let max = eig.iter().cloned().fold(f64::MIN, f64::max);
        let min = eig.iter().cloned().fold(f64::MAX, f64::min);
        let condition = if min > 0.0 { max / min } else { f64::INFINITY };
        if condition.is_nan() || condition > MAX_CONDITION {
            return Err(Error::IllConditioned { condition, slot: None });
        }
        let chol = nalgebra::Cholesky::new(gram.clone()).ok_or(Error::IllConditioned { condition, slot: None })?;
        Ok(Self { model, dual, gram, chol, condition })
    }

    /// Minimizer of the ridge objective for `target`, refined until the
    /// gradient norm is at most [`GRADIENT_TOLERANCE`].
    pub fn solve(&self, target: &DVector<f64>) -> Result<DVector<f64>> {
        let m = self.model;
        if target.len() != m.mean.len() {
            return Err(Error::invalid(format!("target has {} coordinates, model has {}", target.len(), m.mean.len())));
        }
        let rhs_full = target - &m.mean;
        let rhs = if self.dual { rhs_full.clone() } else { m.basis.transpose() * &rhs_full };
        let mut x = self.chol.solve(&rhs);
        let lift = |x: &DVector<f64>| if self.dual { m.basis.transpose() * x } else { x.clone() };
        let mut beta = lift(&x);
        for _ in 0..4 {
            if m.gradient(&beta, target).norm() <= GRADIENT_TOLERANCE {
                return Ok(beta);
            }
            let residual = &rhs - &self.gram * &x;
            x += self.chol.solve(&residual);
            beta = lift(&x);
        }
        let g = m.gradient(&beta, target).norm();
        if g <= GRADIENT_TOLERANCE {
            Ok(beta)
        } else {
            Err(Error::IllConditioned { condition: self.condition, slot: None })
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SemanticFit {
    pub beta: DVector<f64>,
    /// `|mean + B beta - target|`.
    pub residual: f64,
}

pub fn fit_semantic(model: &LandmarkModel, target: &DVector<f64>) -> Result<SemanticFit> {
    let solver = RidgeSolver::new(model)?;
    fit_with(&solver, model, target)
}

fn fit_with(solver: &RidgeSolver<'_>, model: &LandmarkModel, target: &DVector<f64>) -> Result<SemanticFit> {
    let beta = solver.solve(target)?;
    let residual = (&model.mean + &model.basis * &beta - target).norm();
    Ok(SemanticFit { beta, residual })
}

/// Stacked per-slot coefficient rows.
#[derive(Debug, Clone, PartialEq)]
pub struct FittedBasis {
    /// `17 × 64`, row k = slot k.
    pub phi: DMatrix<f64>,
    pub residuals: Vec<f64>,
    /// `|target_k - mean|` per row, for judging residuals.
    pub target_norms: Vec<f64>,
    pub lambda: f64,
    pub basis_hash: String,
    pub rules_hash: String,
}

pub fn build_phi(model: &LandmarkModel, rules: &[SemanticEditRule]) -> Result<FittedBasis> {
    if rules.len() != EXPR_DIM {
        return Err(Error::invalid(format!("need {EXPR_DIM} rules, got {}", rules.len())));
    }
    for (k, r) in rules.iter().enumerate() {
        if r.slot != k {
            return Err(Error::invalid(format!("rule {k} is for slot {}", r.slot)));
        }
    }
    let solver = RidgeSolver::new(model)?;
    let mut phi = DMatrix::zeros(EXPR_DIM, BASIS_DIM);
    let mut residuals = Vec::with_capacity(EXPR_DIM);
    let mut target_norms = Vec::with_capacity(EXPR_DIM);
    for (k, rule) in rules.iter().enumerate() {
        let target = target_landmarks(model, rule)?;
        let fit = fit_with(&solver, model, &target).map_err(|e| match e {
            Error::IllConditioned { condition, .. } => Error::IllConditioned { condition, slot: Some(k) },
            other => other,
        })?;
        phi.set_row(k, &fit.beta.transpose());
        residuals.push(fit.residual);
        target_norms.push((&target - &model.mean).norm());
    }
    Ok(FittedBasis {
        phi,
        residuals,
        target_norms,
        lambda: model.lambda,
        basis_hash: model.basis_hash(),
        rules_hash: rules_hash(rules),
    })
}

impl FittedBasis {
    pub fn to_table(&self) -> String {
        let join = |v: &[f64]| v.iter().map(|x| format!("{x}")).collect::<Vec<_>>().join(",");
        let mut s = String::from("# posekit phi v1\n");
        let _ = writeln!(s, "# lambda_reg={}", self.lambda);
        let _ = writeln!(s, "# basis_hash={}", self.basis_hash);
        let _ = writeln!(s, "# rules_hash={}", self.rules_hash);
        let _ = writeln!(s, "# residuals={}", join(&self.residuals));
        let _ = writeln!(s, "# target_norms={}", join(&self.target_norms));
        let _ = writeln!(s, "# rows={EXPR_DIM} cols={BASIS_DIM}");
        for k in 0..EXPR_DIM {
            let row: Vec<String> = (0..BASIS_DIM).map(|j| format!("{}", self.phi[(k, j)])).collect();
            s.push_str(&row.join("\t"));
            s.push('\n');
        }
        s
    }

    /// SHA-256 of the serialized table.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_table().as_bytes()))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_table()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path)
    }

    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let mut lambda = None;
        let mut basis_hash = String::new();
        let mut rules_hash = String::new();
        let mut residuals = Vec::new();
        let mut target_norms = Vec::new();
        let list = |v: &str| -> Result<Vec<f64>> {
            if v.is_empty() {
                return Ok(Vec::new());
            }
            v.split(',').map(|x| x.parse::<f64>().map_err(|e| Error::format(path, e.to_string()))).collect()
        };
        for line in text.lines().filter_map(|l| l.strip_prefix("# ")) {
            if let Some((k, v)) = line.split_once('=') {
                match k {
                    "lambda_reg" => lambda = Some(v.parse::<f64>().map_err(|e| Error::format(path, e.to_string()))?),
                    "basis_hash" => basis_hash = v.to_string(),
                    "rules_hash" => rules_hash = v.to_string(),
                    "residuals" => residuals = list(v)?,
                    "target_norms" => target_norms = list(v)?,
                    _ => {}
                }
            }
        }
        let rows = parse_table(text, path)?;
        if rows.len() != EXPR_DIM || rows.iter().any(|r| r.len() != BASIS_DIM) {
            return Err(Error::format(path, format!("expected a {EXPR_DIM}×{BASIS_DIM} table")));
        }
        let phi = DMatrix::from_fn(EXPR_DIM, BASIS_DIM, |r, c| rows[r][c]);
        Ok(Self {
            phi,
            residuals,
            target_norms,
            lambda: lambda.ok_or_else(|| Error::format(path, "missing lambda_reg header"))?,
            basis_hash,
            rules_hash,
        })
    }
}

/// 70-dim mapped pose: 64 expression coefficients, yaw/pitch/roll in
/// radians, zero translation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MappedPose(pub [f64; MAPPED_DIM]);

impl MappedPose {
    pub fn expression(&self) -> &[f64] {
        &self.0[..BASIS_DIM]
    }

    pub fn rotation(&self) -> &[f64] {
        &self.0[BASIS_DIM..BASIS_DIM + ANGLE_DIM]
    }

    pub fn translation(&self) -> &[f64] {
        &self.0[BASIS_DIM + ANGLE_DIM..]
    }

    pub fn to_csv_row(&self) -> String {
        self.0.iter().map(|v| format!("{v}")).collect::<Vec<_>>().join(",")
    }
}

impl Serialize for MappedPose {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.0.as_slice().serialize(s)
    }
}

impl<'de> Deserialize<'de> for MappedPose {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let v = Vec::<f64>::deserialize(d)?;
        let arr: [f64; MAPPED_DIM] = v.try_into().map_err(|v: Vec<f64>| {
            serde::de::Error::custom(format!("expected {MAPPED_DIM} values, got {}", v.len()))
        })?;
        Ok(MappedPose(arr))
    }
}

/// `b · phi ⊕ radians(h) ⊕ 0`.
pub fn map_pose(b: &[f64], h_deg: &[f64], phi: &FittedBasis) -> Result<MappedPose> {
    if b.len() != EXPR_DIM {
        return Err(Error::invalid(format!("expression part needs {EXPR_DIM} values, got {}", b.len())));
    }
    if h_deg.len() != ANGLE_DIM {
        return Err(Error::invalid(format!("angle part needs {ANGLE_DIM} values, got {}", h_deg.len())));
    }
    if phi.phi.nrows() != EXPR_DIM || phi.phi.ncols() != BASIS_DIM {
        return Err(Error::invalid("phi must be 17×64"));
    }
    let mut out = [0.0; MAPPED_DIM];
    for (j, o) in out.iter_mut().take(BASIS_DIM).enumerate() {
        let mut acc = 0.0;
        for (k, bk) in b.iter().enumerate() {
            acc += bk * phi.phi[(k, j)];
        }
        *o = acc;
    }
    for (i, h) in h_deg.iter().enumerate() {
        out[BASIS_DIM + i] = deg_to_rad(*h);
    }
    Ok(MappedPose(out))
}

pub fn map_pose_vector(p: &crate::pose::PoseVector, phi: &FittedBasis) -> MappedPose {
    map_pose(&p.expr, &p.angles_deg, phi).expect("pose vector has canonical dimensions")
}

/// Mean landmarks of a character's frontal neutral face, as a flat vector.
pub fn character_mean(ch: &CharacterDescriptor) -> DVector<f64> {
    LandmarkModel::flatten(&head::landmarks(ch, &crate::pose::PoseVector::neutral()))
}
