use posekit::head::{self, neck_pivot_pixel, CharacterDescriptor, Shader, LANDMARK_COUNT, MIRROR};
use posekit::pose::{lerp, PoseVector};

fn characters() -> Vec<CharacterDescriptor> {
    vec![CharacterDescriptor::canonical(), CharacterDescriptor::from_seed(17), CharacterDescriptor::from_seed(90210)]
}

#[test]
fn neutral_pose_is_pixel_symmetric() {
    for ch in characters() {
        for res in [256, 512] {
            for shader in Shader::ALL {
                let f = head::render(&ch, &PoseVector::neutral(), shader.id(), res).unwrap();
                let img = &f.image;
                for y in 0..res {
                    for x in 0..res / 2 {
                        assert_eq!(
                            img.get_pixel(x, y),
                            img.get_pixel(res - 1 - x, y),
                            "seed {} shader {shader:?} res {res} at ({x},{y})",
                            ch.seed
                        );
                    }
                }
            }
        }
    }
}

#[test]
fn symmetric_expressions_stay_symmetric() {
    // Both-sided eye closure and a vowel keep the face mirror symmetric.
    let mut p = PoseVector::neutral();
    p.expr[0] = 0.6;
    p.expr[1] = 0.6;
    p.expr[14] = 0.8;
    let f = head::render(&CharacterDescriptor::from_seed(3), &p, 1, 256).unwrap();
    for y in 0..256 {
        for x in 0..128 {
            assert_eq!(f.image.get_pixel(x, y), f.image.get_pixel(255 - x, y));
        }
    }
}

/// Neutral landmarks rotated by `roll` degrees (counter-clockwise on screen)
/// about the projected neck pivot, in pixel coordinates with y down.
fn rotate_about_pivot(points: &[[f64; 2]; LANDMARK_COUNT], pivot: [f64; 2], roll_deg: f64) -> Vec<[f64; 2]> {
    let (s, c) = roll_deg.to_radians().sin_cos();
    points
        .iter()
        .map(|p| {
            let (dx, dy) = (p[0] - pivot[0], p[1] - pivot[1]);
            [pivot[0] + dx * c + dy * s, pivot[1] - dx * s + dy * c]
        })
        .collect()
}

#[test]
fn roll_rotates_landmarks_about_neck_pivot() {
    for ch in characters() {
        for res in [256, 1024] {
            let neutral = head::render(&ch, &PoseVector::neutral(), 1, res).unwrap();
            let pivot = neck_pivot_pixel(res);
            for roll in [15.0, -15.0, 7.25, 20.0] {
                let p = PoseVector::neutral().with_angles(0.0, 0.0, roll);
                let rolled = head::render(&ch, &p, 1, res).unwrap();
                let want = rotate_about_pivot(&neutral.landmarks, pivot, roll);
                for (i, (got, w)) in rolled.landmarks.iter().zip(&want).enumerate() {
                    assert!(
                        (got[0] - w[0]).abs() <= 1e-9 && (got[1] - w[1]).abs() <= 1e-9,
                        "landmark {i} roll {roll}: {got:?} vs {w:?}"
                    );
                }
            }
        }
    }
}

#[test]
fn alpha_mask_is_shader_independent() {
    let poses = [
        PoseVector::neutral(),
        PoseVector::neutral().with_angles(12.0, -8.0, 5.0),
        PoseVector::unit_slot(14, 1.0).with_angles(-20.0, 20.0, -20.0),
    ];
    for ch in characters() {
        for p in &poses {
            let masks: Vec<Vec<bool>> =
                Shader::ALL.iter().map(|s| head::render(&ch, p, s.id(), 256).unwrap().alpha_mask()).collect();
            assert!(masks[0].iter().any(|a| *a));
            for m in &masks[1..] {
                assert_eq!(m, &masks[0]);
            }
        }
    }
}

#[test]
fn closing_eyes_never_increases_eye_pixels() {
    for ch in characters() {
        for slots in [vec![0], vec![1], vec![0, 1]] {
            let mut last = usize::MAX;
            for step in 0..=10 {
                let mut p = PoseVector::neutral();
                for &s in &slots {
                    p.expr[s] = step as f64 / 10.0;
                }
                let n = head::render(&ch, &p, 1, 256).unwrap().eye_pixel_count();
                assert!(n <= last, "seed {} slots {slots:?} step {step}: {n} > {last}", ch.seed);
                last = n;
            }
            let open = head::render(&ch, &PoseVector::neutral(), 1, 256).unwrap().eye_pixel_count();
            assert!(last < open, "full closure must hide some eye pixels");
        }
    }
}

#[test]
fn landmarks_are_linear_in_intensity() {
    let ch = CharacterDescriptor::from_seed(5);
    let mut p = PoseVector::neutral();
    p.expr[3] = 0.9;
    p.expr[8] = 0.4;
    p.expr[12] = 1.0;
    let mut q = PoseVector::neutral();
    q.expr[2] = 0.2;
    q.expr[10] = 0.7;
    q.expr[15] = 0.5;
    for angles in [[0.0; 3], [10.0, -5.0, 3.0]] {
        let p = p.with_angles(angles[0], angles[1], angles[2]);
        let q = q.with_angles(angles[0], angles[1], angles[2]);
        let lp = head::landmarks(&ch, &p);
        let lq = head::landmarks(&ch, &q);
        for t in [0.0, 0.25, 0.5, 0.75, 1.0] {
            let lt = head::landmarks(&ch, &lerp(&p, &q, t).unwrap());
            for i in 0..LANDMARK_COUNT {
                for a in 0..2 {
                    let want = (1.0 - t) * lp[i][a] + t * lq[i][a];
                    assert!((lt[i][a] - want).abs() <= 1e-12, "t {t} landmark {i}");
                }
            }
        }
    }
}

#[test]
fn neutral_landmarks_mirror_each_other() {
    for ch in characters() {
        let l = head::landmarks(&ch, &PoseVector::neutral());
        for i in 0..LANDMARK_COUNT {
            let j = MIRROR[i];
            assert_eq!(l[i][0], -l[j][0]);
            assert_eq!(l[i][1], l[j][1]);
        }
    }
}

#[test]
fn rendering_is_deterministic() {
    let ch = CharacterDescriptor::from_seed(77);
    let p = PoseVector::unit_slot(6, 0.5).with_angles(3.0, 4.0, -5.0);
    for shader in Shader::ALL {
        let a = head::render(&ch, &p, shader.id(), 256).unwrap();
        let b = head::render(&ch, &p, shader.id(), 256).unwrap();
        assert_eq!(a.pixel_hash(), b.pixel_hash());
        assert_eq!(a.labels, b.labels);
    }
}

#[test]
fn shaders_differ_in_color() {
    let ch = CharacterDescriptor::from_seed(8);
    let hashes: std::collections::BTreeSet<String> = Shader::ALL
        .iter()
        .map(|s| head::render(&ch, &PoseVector::neutral(), s.id(), 256).unwrap().pixel_hash())
        .collect();
    assert_eq!(hashes.len(), 4);
}
