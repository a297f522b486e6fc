//! Angle conversion and a platform-independent head rotation.

/// Degrees to radians.
pub fn deg_to_rad(deg: f64) -> f64 {
    deg.to_radians()
}

pub fn rad_to_deg(rad: f64) -> f64 {
    rad.to_degrees()
}

/// `(sin x, cos x)` from basic IEEE operations only, so results do not
/// depend on the platform's libm. Absolute error is below 1e-14 after
/// reduction to `[-pi, pi]`.
pub fn sin_cos(x: f64) -> (f64, f64) {
    use std::f64::consts::PI;
    let two_pi = 2.0 * PI;
    let mut r = x.rem_euclid(two_pi);
    if r > PI {
        r -= two_pi;
    }
    let r2 = r * r;
    // Horner over odd/even Taylor terms up to degree 34.
    let mut s = 0.0;
    let mut c = 0.0;
    for n in (0..18).rev() {
        let k = n as f64;
        s = 1.0 - s * r2 / ((2.0 * k + 2.0) * (2.0 * k + 3.0));
        c = 1.0 - c * r2 / ((2.0 * k + 1.0) * (2.0 * k + 2.0));
    }
    (r * s, c)
}

pub type Mat3 = [[f64; 3]; 3];

fn mul(a: &Mat3, b: &Mat3) -> Mat3 {
    let mut out = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            out[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j] + a[i][2] * b[2][j];
        }
    }
    out
}

/// Head rotation `R = Ry(yaw) Rx(pitch) Rz(roll)` in a right-handed frame
/// with +x the character's left, +y up and +z towards the camera. Positive
/// roll turns the head counter-clockwise as seen by the viewer.
pub fn head_rotation(yaw_deg: f64, pitch_deg: f64, roll_deg: f64) -> Mat3 {
    let (sy, cy) = sin_cos(deg_to_rad(yaw_deg));
    let (sp, cp) = sin_cos(deg_to_rad(pitch_deg));
    let (sr, cr) = sin_cos(deg_to_rad(roll_deg));
    let ry = [[cy, 0.0, sy], [0.0, 1.0, 0.0], [-sy, 0.0, cy]];
    let rx = [[1.0, 0.0, 0.0], [0.0, cp, -sp], [0.0, sp, cp]];
    let rz = [[cr, -sr, 0.0], [sr, cr, 0.0], [0.0, 0.0, 1.0]];
    mul(&ry, &mul(&rx, &rz))
}

pub fn apply(m: &Mat3, v: [f64; 3]) -> [f64; 3] {
    [
        m[0][0] * v[0] + m[0][1] * v[1] + m[0][2] * v[2],
        m[1][0] * v[0] + m[1][1] * v[1] + m[1][2] * v[2],
        m[2][0] * v[0] + m[2][1] * v[1] + m[2][2] * v[2],
    ]
}
