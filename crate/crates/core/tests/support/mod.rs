//! Reference solvers that share no code with the library: a double-double
//! Cholesky on the primal normal equations, and conjugate-gradient least
//! squares on the unregularized problem.
#![allow(dead_code, clippy::needless_range_loop)]

use nalgebra::{DMatrix, DVector};
use posekit::mapping::{LandmarkModel, COORD_DIM};
use posekit::rng::Stream;

/// Unevaluated sum `hi + lo` with |lo| <= ulp(hi)/2.
#[derive(Debug, Clone, Copy)]
struct Dd {
    hi: f64,
    lo: f64,
}

fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    (s, (a - (s - bb)) + (b - bb))
}

fn two_prod(a: f64, b: f64) -> (f64, f64) {
    let p = a * b;
    (p, a.mul_add(b, -p))
}

impl Dd {
    const ZERO: Dd = Dd { hi: 0.0, lo: 0.0 };

    fn from(x: f64) -> Dd {
        Dd { hi: x, lo: 0.0 }
    }

    fn norm(hi: f64, lo: f64) -> Dd {
        let (s, e) = two_sum(hi, lo);
        Dd { hi: s, lo: e }
    }

    fn add(self, o: Dd) -> Dd {
        let (s, e) = two_sum(self.hi, o.hi);
        let (t, f) = two_sum(self.lo, o.lo);
        let (s, e) = two_sum(s, e + t);
        Dd::norm(s, e + f)
    }

    fn neg(self) -> Dd {
        Dd { hi: -self.hi, lo: -self.lo }
    }

    fn sub(self, o: Dd) -> Dd {
        self.add(o.neg())
    }

    fn mul(self, o: Dd) -> Dd {
        let (p, e) = two_prod(self.hi, o.hi);
        Dd::norm(p, e + (self.hi * o.lo + self.lo * o.hi))
    }

    fn div(self, o: Dd) -> Dd {
        let q1 = self.hi / o.hi;
        let r = self.sub(o.mul(Dd::from(q1)));
        let q2 = r.hi / o.hi;
        let r = r.sub(o.mul(Dd::from(q2)));
        let q3 = r.hi / o.hi;
        Dd::from(q1).add(Dd::from(q2)).add(Dd::from(q3))
    }

    fn sqrt(self) -> Dd {
        let x = self.hi.sqrt();
        // One Newton step in double-double.
        let (p, e) = two_prod(x, x);
        let r = self.sub(Dd::norm(p, e));
        Dd::from(x).add(Dd::from(r.hi / (2.0 * x)))
    }
}

/// Solves `(BᵀB + λI) β = Bᵀ r` in double-double arithmetic.
pub fn dd_ridge(b: &DMatrix<f64>, r: &DVector<f64>, lambda: f64) -> Vec<f64> {
    let n = b.ncols();
    let m = b.nrows();
    let mut a = vec![vec![Dd::ZERO; n]; n];
    let mut rhs = vec![Dd::ZERO; n];
    for i in 0..n {
        for j in 0..=i {
            let mut acc = Dd::ZERO;
            for k in 0..m {
                acc = acc.add(Dd::from(b[(k, i)]).mul(Dd::from(b[(k, j)])));
            }
            if i == j {
                acc = acc.add(Dd::from(lambda));
            }
            a[i][j] = acc;
            a[j][i] = acc;
        }
        let mut acc = Dd::ZERO;
        for k in 0..m {
            acc = acc.add(Dd::from(b[(k, i)]).mul(Dd::from(r[k])));
        }
        rhs[i] = acc;
    }
    // Cholesky A = L Lᵀ.
    let mut l = vec![vec![Dd::ZERO; n]; n];
    for j in 0..n {
        let mut d = a[j][j];
        for k in 0..j {
            d = d.sub(l[j][k].mul(l[j][k]));
        }
        let d = d.sqrt();
        l[j][j] = d;
        for i in j + 1..n {
            let mut s = a[i][j];
            for k in 0..j {
                s = s.sub(l[i][k].mul(l[j][k]));
            }
            l[i][j] = s.div(d);
        }
    }
    let mut y = vec![Dd::ZERO; n];
    for i in 0..n {
        let mut s = rhs[i];
        for k in 0..i {
            s = s.sub(l[i][k].mul(y[k]));
        }
        y[i] = s.div(l[i][i]);
    }
    let mut x = vec![Dd::ZERO; n];
    for i in (0..n).rev() {
        let mut s = y[i];
        for k in i + 1..n {
            s = s.sub(l[k][i].mul(x[k]));
        }
        x[i] = s.div(l[i][i]);
    }
    x.into_iter().map(|v| v.hi + v.lo).collect()
}

/// Minimum-norm least squares `min |Bβ - r|` by conjugate gradients on the
/// normal equations, started from zero (so iterates stay in range(Bᵀ)).
pub fn cgls(b: &DMatrix<f64>, r: &DVector<f64>, iters: usize) -> DVector<f64> {
    let mut x = DVector::zeros(b.ncols());
    let mut res = r.clone();
    let mut s = b.transpose() * &res;
    let mut p = s.clone();
    let mut gamma = s.norm_squared();
    for _ in 0..iters {
        if gamma == 0.0 {
            break;
        }
        let q = b * &p;
        let alpha = gamma / q.norm_squared();
        x += alpha * &p;
        res -= alpha * &q;
        s = b.transpose() * &res;
        let g_new = s.norm_squared();
        p = &s + (g_new / gamma) * &p;
        gamma = g_new;
    }
    x
}

/// β* in the row space of B (B is 48×64, so only that part is identifiable).
pub fn random_beta(model: &LandmarkModel, k: u64) -> DVector<f64> {
    let mut rng = Stream::new("test-beta", "", 11, k);
    let z = DVector::from_fn(COORD_DIM, |_, _| rng.uniform(-1.0, 1.0));
    let beta = model.basis.transpose() * z;
    &beta / beta.norm() * rng.uniform(0.5, 2.0)
}

pub fn rel(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    (a - b).norm() / b.norm()
}
