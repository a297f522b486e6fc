use std::ffi::{CStr, CString};
use std::ptr;

use posekit_ffi::*;

fn last_error() -> String {
    let mut buf = vec![0 as std::ffi::c_char; 256];
    let n = unsafe { posekit_last_error_message(buf.as_mut_ptr(), buf.len()) };
    let s = unsafe { CStr::from_ptr(buf.as_ptr()) }.to_string_lossy().into_owned();
    assert_eq!(s.len(), n.min(255));
    s
}

fn phi() -> *mut PosekitPhi {
    let mut h = ptr::null_mut();
    assert_eq!(unsafe { posekit_phi_fit_default(1e-2, &mut h) }, PosekitStatus::Ok);
    assert!(!h.is_null());
    h
}

#[test]
fn version_is_a_c_string() {
    let v = unsafe { CStr::from_ptr(posekit_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}

#[test]
fn sampling_matches_the_library() {
    let mut n = 0usize;
    assert_eq!(unsafe { posekit_sample_count(6, &mut n) }, PosekitStatus::Ok);
    assert_eq!(n, 100);
    assert_eq!(unsafe { posekit_sample_count(5, &mut n) }, PosekitStatus::Ok);
    assert_eq!(n, 20);
    assert_eq!(unsafe { posekit_sample_count(-1, &mut n) }, PosekitStatus::Invalid);
    assert!(last_error().contains("negative"));

    let ids: Vec<u8> = (0..23).collect();
    let mut out = [0.0; 20];
    assert_eq!(
        unsafe { posekit_sample_pose(ids.as_ptr(), ids.len(), 9, 4, true, out.as_mut_ptr()) },
        PosekitStatus::Ok
    );
    let want = posekit::sampler::sample_pose(&posekit::sampler::MorphAvailability::all(9), 4, true);
    assert_eq!(out, want.to_array());

    let bad = [30u8];
    assert_eq!(unsafe { posekit_sample_pose(bad.as_ptr(), 1, 9, 0, true, out.as_mut_ptr()) }, PosekitStatus::Invalid);
    // An empty id list may pass a null pointer.
    assert_eq!(unsafe { posekit_sample_pose(ptr::null(), 0, 9, 0, false, out.as_mut_ptr()) }, PosekitStatus::Ok);
    assert_eq!(out, [0.0; 20]);
}

#[test]
fn null_pointers_are_reported() {
    let mut out = [0.0; 20];
    let p = [0.0; 20];
    assert_eq!(unsafe { posekit_lerp(ptr::null(), p.as_ptr(), 0.5, out.as_mut_ptr()) }, PosekitStatus::NullPointer);
    assert!(last_error().contains('p'));
    assert_eq!(unsafe { posekit_sample_count(3, ptr::null_mut()) }, PosekitStatus::NullPointer);
    assert_eq!(unsafe { posekit_map_pose(ptr::null(), p.as_ptr(), out.as_mut_ptr()) }, PosekitStatus::NullPointer);
    assert_eq!(unsafe { posekit_phi_load(ptr::null(), &mut ptr::null_mut()) }, PosekitStatus::NullPointer);
    assert!(unsafe { posekit_head_angle_error(ptr::null(), p.as_ptr()) }.is_nan());
    unsafe {
        posekit_phi_free(ptr::null_mut());
        posekit_character_free(ptr::null_mut());
    }
}

#[test]
fn validation_and_interpolation() {
    let mut p = [0.0; 20];
    p[0] = 1.5;
    p[17] = 25.0;
    let mut n = 0usize;
    assert_eq!(unsafe { posekit_validate_pose(p.as_ptr(), &mut n) }, PosekitStatus::Ok);
    assert_eq!(n, 2);
    p[3] = f64::NAN;
    assert_eq!(unsafe { posekit_validate_pose(p.as_ptr(), &mut n) }, PosekitStatus::NonFinite);

    let a = [0.0; 20];
    let mut b = [0.0; 20];
    b[12] = 1.0;
    b[17] = 20.0;
    let mut out = [0.0; 20];
    assert_eq!(unsafe { posekit_lerp(a.as_ptr(), b.as_ptr(), 0.5, out.as_mut_ptr()) }, PosekitStatus::Ok);
    assert_eq!((out[12], out[17]), (0.5, 10.0));
    assert_eq!(unsafe { posekit_lerp(a.as_ptr(), b.as_ptr(), 1.5, out.as_mut_ptr()) }, PosekitStatus::Invalid);
}

#[test]
fn phi_handles_round_trip() {
    let h = phi();
    let mut zero = [1.0; 70];
    let pose = [0.0; 20];
    assert_eq!(unsafe { posekit_map_pose(h, pose.as_ptr(), zero.as_mut_ptr()) }, PosekitStatus::Ok);
    assert_eq!(zero, [0.0; 70]);

    let mut row = [0.0; 64];
    let mut unit = [0.0; 20];
    unit[5] = 1.0;
    unit[17] = 20.0;
    let mut mapped = [0.0; 70];
    assert_eq!(unsafe { posekit_phi_row(h, 5, row.as_mut_ptr()) }, PosekitStatus::Ok);
    assert_eq!(unsafe { posekit_map_pose(h, unit.as_ptr(), mapped.as_mut_ptr()) }, PosekitStatus::Ok);
    assert_eq!(&mapped[..64], &row[..]);
    assert!((mapped[64] - 0.3490658504).abs() < 1e-10);
    assert_eq!(&mapped[67..], &[0.0; 3]);
    assert_eq!(unsafe { posekit_phi_row(h, 17, row.as_mut_ptr()) }, PosekitStatus::Invalid);

    let dir = tempfile::tempdir().unwrap();
    let path = CString::new(dir.path().join("phi.tsv").to_str().unwrap()).unwrap();
    assert_eq!(unsafe { posekit_phi_save(h, path.as_ptr()) }, PosekitStatus::Ok);
    let mut loaded = ptr::null_mut();
    assert_eq!(unsafe { posekit_phi_load(path.as_ptr(), &mut loaded) }, PosekitStatus::Ok);
    let mut again = [0.0; 70];
    assert_eq!(unsafe { posekit_map_pose(loaded, unit.as_ptr(), again.as_mut_ptr()) }, PosekitStatus::Ok);
    assert_eq!(again, mapped);

    let missing = CString::new("/nonexistent/phi.tsv").unwrap();
    let mut none = ptr::null_mut();
    assert_eq!(unsafe { posekit_phi_load(missing.as_ptr(), &mut none) }, PosekitStatus::Io);
    assert!(none.is_null());
    unsafe {
        posekit_phi_free(h);
        posekit_phi_free(loaded);
    }
}

#[test]
fn negative_lambda_is_rejected() {
    let mut h = ptr::null_mut();
    assert_eq!(unsafe { posekit_phi_fit_default(-1.0, &mut h) }, PosekitStatus::Invalid);
    assert!(h.is_null());
}

#[test]
fn render_and_metrics() {
    let ch = posekit_character_new(12, 0.75);
    let res = 256u32;
    let mut a = vec![0u8; (res * res * 4) as usize];
    let mut b = a.clone();
    let mut lm = [0.0; 48];
    let neutral = [0.0; 20];
    let st = unsafe { posekit_render(ch, neutral.as_ptr(), 1, res, a.as_mut_ptr(), a.len(), lm.as_mut_ptr()) };
    assert_eq!(st, PosekitStatus::Ok);
    let want = posekit::head::render(
        &posekit::head::CharacterDescriptor::generate(12, 0.75),
        &posekit::pose::PoseVector::neutral(),
        1,
        res,
    )
    .unwrap();
    assert_eq!(a, want.image.as_raw().as_slice());
    assert_eq!(lm[0], want.landmarks[0][0]);

    let mut rolled = [0.0; 20];
    rolled[19] = 10.0;
    let st = unsafe { posekit_render(ch, rolled.as_ptr(), 2, res, b.as_mut_ptr(), b.len(), ptr::null_mut()) };
    assert_eq!(st, PosekitStatus::Ok);
    let st = unsafe { posekit_render(ch, rolled.as_ptr(), 2, res, b.as_mut_ptr(), 100, ptr::null_mut()) };
    assert_eq!(st, PosekitStatus::BufferTooSmall);
    let st = unsafe { posekit_render(ch, rolled.as_ptr(), 9, res, b.as_mut_ptr(), b.len(), ptr::null_mut()) };
    assert_eq!(st, PosekitStatus::Invalid);
    let st = unsafe { posekit_render(ch, rolled.as_ptr(), 1, 300, b.as_mut_ptr(), b.len(), ptr::null_mut()) };
    assert_eq!(st, PosekitStatus::Invalid);

    let mut v = 0.0;
    assert_eq!(unsafe { posekit_ssim(a.as_ptr(), a.as_ptr(), res, res, &mut v) }, PosekitStatus::Ok);
    assert_eq!(v, 1.0);
    assert_eq!(unsafe { posekit_ssim(a.as_ptr(), b.as_ptr(), res, res, &mut v) }, PosekitStatus::Ok);
    assert!(v < 1.0);

    let (p, t) = ([3.0, 0.0, -3.0], [0.0; 3]);
    assert_eq!(unsafe { posekit_head_angle_error(p.as_ptr(), t.as_ptr()) }, 2.0);
    unsafe { posekit_character_free(ch) };
}

#[test]
fn header_declares_the_api() {
    let header = include_str!("../include/posekit.h");
    for f in [
        "posekit_version",
        "posekit_last_error_message",
        "posekit_sample_count",
        "posekit_sample_pose",
        "posekit_validate_pose",
        "posekit_lerp",
        "posekit_phi_fit_default",
        "posekit_phi_load",
        "posekit_phi_save",
        "posekit_phi_row",
        "posekit_map_pose",
        "posekit_phi_free",
        "posekit_character_new",
        "posekit_character_free",
        "posekit_render",
        "posekit_ssim",
        "posekit_head_angle_error",
    ] {
        assert!(header.contains(&format!("{f}(")), "{f} missing from header");
    }
    assert!(header.contains("typedef struct PosekitPhi PosekitPhi;"));
    assert!(header.contains("typedef struct PosekitCharacter PosekitCharacter;"));
    assert!(header.contains("POSEKIT_STATUS_BUFFER_TOO_SMALL = 9"));
}
