//! C ABI for posekit.
//!
//! Every fallible function returns a [`PosekitStatus`]; on failure the
//! message is kept per thread and can be copied out with
//! [`posekit_last_error_message`]. Handles are opaque and must be released
//! with their matching `_free` function. Pose vectors are 20 doubles in slot
//! order, mapped poses 70 doubles.

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;

use posekit::head::{self, CharacterDescriptor, LANDMARK_COUNT};
use posekit::mapping::{self, FittedBasis, LandmarkModel, BASIS_DIM, MAPPED_DIM};
use posekit::metrics::{self, SsimConfig};
use posekit::pose::{self, PoseVector, TargetMorph, EXPR_DIM, POSE_DIM};
use posekit::sampler::{self, MorphAvailability};
use posekit::Error;

pub const POSEKIT_POSE_DIM: usize = 20;
pub const POSEKIT_MAPPED_DIM: usize = 70;
pub const POSEKIT_BASIS_DIM: usize = 64;
pub const POSEKIT_LANDMARK_COUNT: usize = 24;

const _: () = assert!(POSEKIT_POSE_DIM == POSE_DIM);
const _: () = assert!(POSEKIT_MAPPED_DIM == MAPPED_DIM);
const _: () = assert!(POSEKIT_BASIS_DIM == BASIS_DIM);
const _: () = assert!(POSEKIT_LANDMARK_COUNT == LANDMARK_COUNT);

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PosekitStatus {
    Ok = 0,
    Invalid = 1,
    NonFinite = 2,
    IllConditioned = 3,
    NotFound = 4,
    Conflict = 5,
    Io = 6,
    Format = 7,
    NullPointer = 8,
    BufferTooSmall = 9,
    Panic = 10,
}

/// Fitted expression-to-basis table.
pub struct PosekitPhi(FittedBasis);

/// Synthetic character.
pub struct PosekitCharacter(CharacterDescriptor);

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: String) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
}

fn status_of(e: &Error) -> PosekitStatus {
    match e {
        Error::Invalid(_) => PosekitStatus::Invalid,
        Error::NonFinite { .. } => PosekitStatus::NonFinite,
        Error::IllConditioned { .. } => PosekitStatus::IllConditioned,
        Error::NotFound(_) => PosekitStatus::NotFound,
        Error::Conflict(_) => PosekitStatus::Conflict,
        Error::Io { .. } => PosekitStatus::Io,
        Error::Format { .. } | Error::Image(_) => PosekitStatus::Format,
    }
}

enum Fail {
    Core(Error),
    Null(&'static str),
    Small { need: usize, got: usize },
}

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail::Core(e)
    }
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> PosekitStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => PosekitStatus::Ok,
        Ok(Err(Fail::Core(e))) => {
            set_error(e.to_string());
            status_of(&e)
        }
        Ok(Err(Fail::Null(what))) => {
            set_error(format!("null pointer: {what}"));
            PosekitStatus::NullPointer
        }
        Ok(Err(Fail::Small { need, got })) => {
            set_error(format!("buffer too small: need {need}, got {got}"));
            PosekitStatus::BufferTooSmall
        }
        Err(_) => {
            set_error("internal panic".into());
            PosekitStatus::Panic
        }
    }
}

unsafe fn slice<'a, T>(p: *const T, len: usize, what: &'static str) -> Result<&'a [T], Fail> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(Fail::Null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn slice_mut<'a, T>(p: *mut T, len: usize, what: &'static str) -> Result<&'a mut [T], Fail> {
    if p.is_null() {
        return Err(Fail::Null(what));
    }
    Ok(std::slice::from_raw_parts_mut(p, len))
}

unsafe fn read_pose(p: *const f64) -> Result<PoseVector, Fail> {
    let v = slice(p, POSE_DIM, "pose")?;
    Ok(PoseVector::from_slice(v)?)
}

unsafe fn path_arg(p: *const c_char) -> Result<PathBuf, Fail> {
    if p.is_null() {
        return Err(Fail::Null("path"));
    }
    let s = CStr::from_ptr(p).to_str().map_err(|_| Fail::Core(Error::invalid("path is not UTF-8")))?;
    Ok(PathBuf::from(s))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn posekit_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Copies the calling thread's last error message into `buf` (NUL-terminated,
/// truncated to `len`). Returns the full message length excluding the NUL.
///
/// # Safety
/// `buf` must be null or valid for `len` bytes.
#[no_mangle]
pub unsafe extern "C" fn posekit_last_error_message(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        if !buf.is_null() && len > 0 {
            let n = msg.len().min(len - 1);
            std::ptr::copy_nonoverlapping(msg.as_ptr(), buf.cast::<u8>(), n);
            *buf.add(n) = 0;
        }
        msg.len()
    })
}

/// Number of pose draws for a character with `n_target_morphs` available morphs.
///
/// # Safety
/// `out` must be valid for writing.
#[no_mangle]
pub unsafe extern "C" fn posekit_sample_count(n_target_morphs: i64, out: *mut usize) -> PosekitStatus {
    guard(|| {
        let out = slice_mut(out, 1, "out")?;
        out[0] = sampler::sample_count(n_target_morphs)?;
        Ok(())
    })
}

/// Draws pose `draw_index` for a character whose available target-morph ids
/// are `ids[0..n_ids]`, writing 20 doubles to `out`.
///
/// # Safety
/// `ids` must be valid for `n_ids` bytes and `out` for 20 doubles.
#[no_mangle]
pub unsafe extern "C" fn posekit_sample_pose(
    ids: *const u8,
    n_ids: usize,
    seed: u64,
    draw_index: u64,
    rotate: bool,
    out: *mut f64,
) -> PosekitStatus {
    guard(|| {
        let ids = slice(ids, n_ids, "ids")?;
        let morphs = ids.iter().map(|&i| TargetMorph::from_id(i)).collect::<posekit::Result<Vec<_>>>()?;
        let avail = MorphAvailability::new(morphs, seed);
        let out = slice_mut(out, POSE_DIM, "out")?;
        out.copy_from_slice(&sampler::sample_pose(&avail, draw_index, rotate).to_array());
        Ok(())
    })
}

/// Validates a pose; writes the number of range violations to
/// `out_violations`. Non-finite entries fail with `POSEKIT_STATUS_NON_FINITE`.
///
/// # Safety
/// `pose` must be valid for 20 doubles and `out_violations` for writing.
#[no_mangle]
pub unsafe extern "C" fn posekit_validate_pose(pose: *const f64, out_violations: *mut usize) -> PosekitStatus {
    guard(|| {
        let v = slice(pose, POSE_DIM, "pose")?;
        let mut p = PoseVector::neutral();
        p.expr.copy_from_slice(&v[..EXPR_DIM]);
        p.angles_deg.copy_from_slice(&v[EXPR_DIM..]);
        let report = pose::validate(&p)?;
        slice_mut(out_violations, 1, "out_violations")?[0] = report.violations.len();
        Ok(())
    })
}

/// `(1 - t) p + t q` for `t` in `[0, 1]`.
///
/// # Safety
/// `p`, `q` and `out` must each be valid for 20 doubles.
#[no_mangle]
pub unsafe extern "C" fn posekit_lerp(p: *const f64, q: *const f64, t: f64, out: *mut f64) -> PosekitStatus {
    guard(|| {
        let r = pose::lerp(&read_pose(p)?, &read_pose(q)?, t)?;
        slice_mut(out, POSE_DIM, "out")?.copy_from_slice(&r.to_array());
        Ok(())
    })
}

/// Fits Φ on the default landmark model with regularization `lambda`.
///
/// # Safety
/// `out` must be valid for writing a pointer.
#[no_mangle]
pub unsafe extern "C" fn posekit_phi_fit_default(lambda: f64, out: *mut *mut PosekitPhi) -> PosekitStatus {
    guard(|| {
        let out = slice_mut(out, 1, "out")?;
        let (model, rules) = LandmarkModel::default_model();
        let phi = mapping::build_phi(&model.with_lambda(lambda)?, &rules)?;
        out[0] = Box::into_raw(Box::new(PosekitPhi(phi)));
        Ok(())
    })
}

/// Loads Φ from a table written by `posekit_phi_save` or the CLI.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` valid for writing a pointer.
#[no_mangle]
pub unsafe extern "C" fn posekit_phi_load(path: *const c_char, out: *mut *mut PosekitPhi) -> PosekitStatus {
    guard(|| {
        let out = slice_mut(out, 1, "out")?;
        let phi = FittedBasis::load(&path_arg(path)?)?;
        out[0] = Box::into_raw(Box::new(PosekitPhi(phi)));
        Ok(())
    })
}

/// # Safety
/// `phi` must be a live handle; `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn posekit_phi_save(phi: *const PosekitPhi, path: *const c_char) -> PosekitStatus {
    guard(|| {
        let phi = phi.as_ref().ok_or(Fail::Null("phi"))?;
        phi.0.save(&path_arg(path)?)?;
        Ok(())
    })
}

/// Copies row `slot` (64 doubles) of Φ into `out`.
///
/// # Safety
/// `phi` must be a live handle; `out` valid for 64 doubles.
#[no_mangle]
pub unsafe extern "C" fn posekit_phi_row(phi: *const PosekitPhi, slot: usize, out: *mut f64) -> PosekitStatus {
    guard(|| {
        let phi = phi.as_ref().ok_or(Fail::Null("phi"))?;
        if slot >= EXPR_DIM {
            return Err(Error::invalid(format!("slot {slot} out of range")).into());
        }
        let out = slice_mut(out, BASIS_DIM, "out")?;
        for (j, o) in out.iter_mut().enumerate() {
            *o = phi.0.phi[(slot, j)];
        }
        Ok(())
    })
}

/// Maps a 20-dim pose to 70 parameters.
///
/// # Safety
/// `phi` must be a live handle; `pose` valid for 20 doubles, `out` for 70.
#[no_mangle]
pub unsafe extern "C" fn posekit_map_pose(phi: *const PosekitPhi, pose: *const f64, out: *mut f64) -> PosekitStatus {
    guard(|| {
        let phi = phi.as_ref().ok_or(Fail::Null("phi"))?;
        let v = slice(pose, POSE_DIM, "pose")?;
        let m = mapping::map_pose(&v[..EXPR_DIM], &v[EXPR_DIM..], &phi.0)?;
        slice_mut(out, MAPPED_DIM, "out")?.copy_from_slice(&m.0);
        Ok(())
    })
}

/// # Safety
/// `phi` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn posekit_phi_free(phi: *mut PosekitPhi) {
    if !phi.is_null() {
        drop(Box::from_raw(phi));
    }
}

/// Creates a synthetic character; returns null only on allocation failure.
#[no_mangle]
pub extern "C" fn posekit_character_new(seed: u64, support_probability: f64) -> *mut PosekitCharacter {
    let p = if support_probability.is_finite() { support_probability.clamp(0.0, 1.0) } else { 0.0 };
    Box::into_raw(Box::new(PosekitCharacter(CharacterDescriptor::generate(seed, p))))
}

/// # Safety
/// `ch` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn posekit_character_free(ch: *mut PosekitCharacter) {
    if !ch.is_null() {
        drop(Box::from_raw(ch));
    }
}

/// Renders `pose` into `rgba` (row-major, `resolution² × 4` bytes). When
/// `landmarks` is non-null, 48 doubles of pixel coordinates (x, y per
/// landmark) are written there.
///
/// # Safety
/// `ch` must be a live handle, `pose` valid for 20 doubles, `rgba` for
/// `rgba_len` bytes and `landmarks` null or valid for 48 doubles.
#[no_mangle]
pub unsafe extern "C" fn posekit_render(
    ch: *const PosekitCharacter,
    pose: *const f64,
    shader: u8,
    resolution: u32,
    rgba: *mut u8,
    rgba_len: usize,
    landmarks: *mut f64,
) -> PosekitStatus {
    guard(|| {
        let ch = ch.as_ref().ok_or(Fail::Null("character"))?;
        let pose = read_pose(pose)?;
        head::check_resolution(resolution)?;
        let need = resolution as usize * resolution as usize * 4;
        if rgba_len < need {
            return Err(Fail::Small { need, got: rgba_len });
        }
        let frame = head::render(&ch.0, &pose, shader, resolution)?;
        slice_mut(rgba, need, "rgba")?.copy_from_slice(frame.image.as_raw());
        if !landmarks.is_null() {
            let out = slice_mut(landmarks, 2 * LANDMARK_COUNT, "landmarks")?;
            for (i, p) in frame.landmarks.iter().enumerate() {
                out[2 * i] = p[0];
                out[2 * i + 1] = p[1];
            }
        }
        Ok(())
    })
}

/// SSIM with default settings between two RGBA buffers of `width × height`.
///
/// # Safety
/// `a` and `b` must each be valid for `width * height * 4` bytes; `out` for
/// one double.
#[no_mangle]
pub unsafe extern "C" fn posekit_ssim(
    a: *const u8,
    b: *const u8,
    width: u32,
    height: u32,
    out: *mut f64,
) -> PosekitStatus {
    guard(|| {
        let n = width as usize * height as usize * 4;
        let to_img = |p: *const u8, what| -> Result<image::RgbaImage, Fail> {
            let s = slice(p, n, what)?;
            image::RgbaImage::from_raw(width, height, s.to_vec())
                .ok_or_else(|| Fail::Core(Error::invalid("bad image dimensions")))
        };
        let v = metrics::ssim(&to_img(a, "a")?, &to_img(b, "b")?, &SsimConfig::default())?;
        slice_mut(out, 1, "out")?[0] = v;
        Ok(())
    })
}

/// Mean absolute per-axis angle difference in degrees; NaN if either
/// pointer is null.
///
/// # Safety
/// `predicted` and `target` must be null or valid for 3 doubles.
#[no_mangle]
pub unsafe extern "C" fn posekit_head_angle_error(predicted: *const f64, target: *const f64) -> f64 {
    if predicted.is_null() || target.is_null() {
        return f64::NAN;
    }
    let p = &*predicted.cast::<[f64; 3]>();
    let t = &*target.cast::<[f64; 3]>();
    metrics::head_angle_error(p, t)
}
