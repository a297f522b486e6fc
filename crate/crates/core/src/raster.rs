//! Exact polygon scan conversion on a fixed-point grid.
//!
//! Coordinates are integers in 1/256 pixel, measured from the image centre,
//! with y growing downwards. Pixel centres sit at odd multiples of 128, so
//! column `i` of an `n`-wide image has centre `(2i + 1 - n) * 128`.
//!
//! A pixel is covered when its centre lies in the closed polygon (interior by
//! even-odd rule, or exactly on an edge or vertex). All arithmetic is integer,
//! so negating every x coordinate mirrors the coverage exactly.

pub const SUBPIXEL: i64 = 256;
const HALF: i64 = SUBPIXEL / 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FixedPoint {
    pub x: i64,
    pub y: i64,
}

/// Converts a float pixel offset (from the image centre) to fixed point.
/// `f64::round` rounds half away from zero, so this commutes with negation.
pub fn to_fixed(v: f64) -> i64 {
    (v * SUBPIXEL as f64).round() as i64
}

pub fn pixel_center(index: usize, size: usize) -> i64 {
    (2 * index as i64 + 1 - size as i64) * HALF
}

/// x = num / den with den > 0.
#[derive(Debug, Clone, Copy)]
struct Rational {
    num: i128,
    den: i128,
}

impl Rational {
    fn cmp(&self, other: &Rational) -> std::cmp::Ordering {
        (self.num * other.den).cmp(&(other.num * self.den))
    }
}

fn floor_div(a: i128, b: i128) -> i128 {
    let q = a / b;
    if (a % b != 0) && ((a < 0) != (b < 0)) {
        q - 1
    } else {
        q
    }
}

fn ceil_div(a: i128, b: i128) -> i128 {
    -floor_div(-a, b)
}

/// Column range whose centres fall within `[lo, hi]`, clipped to the image.
fn column_span(lo: Rational, hi: Rational, size: usize) -> Option<(usize, usize)> {
    let n = size as i128;
    // centre_i >= lo  <=>  2i + 1 - n >= ceil(lo / HALF)
    let k = ceil_div(lo.num, HALF as i128 * lo.den);
    let first = ceil_div(k + n - 1, 2).max(0);
    let f = floor_div(hi.num, HALF as i128 * hi.den);
    let last = floor_div(f + n - 1, 2).min(n - 1);
    (first <= last).then_some((first as usize, last as usize))
}

/// Calls `plot(col, row)` once for each covered pixel of a `size`×`size` image.
pub fn fill_polygon(poly: &[FixedPoint], size: usize, mut plot: impl FnMut(usize, usize)) {
    if poly.is_empty() {
        return;
    }
    let ymin = poly.iter().map(|p| p.y).min().unwrap();
    let ymax = poly.iter().map(|p| p.y).max().unwrap();
    let mut row_mask = vec![false; size];
    let mut crossings: Vec<Rational> = Vec::with_capacity(poly.len());
    let mut closed: Vec<(Rational, Rational)> = Vec::new();

    for row in 0..size {
        let cy = pixel_center(row, size);
        if cy < ymin || cy > ymax {
            continue;
        }
        crossings.clear();
        closed.clear();
        for (i, a) in poly.iter().enumerate() {
            let b = poly[(i + 1) % poly.len()];
            if a.y == cy {
                let x = Rational { num: a.x as i128, den: 1 };
                closed.push((x, x));
            }
            if a.y == cy && b.y == cy {
                let (lo, hi) = if a.x <= b.x { (a.x, b.x) } else { (b.x, a.x) };
                closed.push((Rational { num: lo as i128, den: 1 }, Rational { num: hi as i128, den: 1 }));
            } else if (a.y <= cy) != (b.y <= cy) {
                let dy = (b.y - a.y) as i128;
                let num = a.x as i128 * dy + (cy - a.y) as i128 * (b.x - a.x) as i128;
                let (num, den) = if dy < 0 { (-num, -dy) } else { (num, dy) };
                crossings.push(Rational { num, den });
            }
        }
        crossings.sort_by(Rational::cmp);
        for pair in crossings.chunks_exact(2) {
            closed.push((pair[0], pair[1]));
        }
        if closed.is_empty() {
            continue;
        }
        row_mask.iter_mut().for_each(|m| *m = false);
        for (lo, hi) in &closed {
            if let Some((a, b)) = column_span(*lo, *hi, size) {
                row_mask[a..=b].iter_mut().for_each(|m| *m = true);
            }
        }
        for (col, m) in row_mask.iter().enumerate() {
            if *m {
                plot(col, row);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn covered(poly: &[FixedPoint], size: usize) -> Vec<bool> {
        let mut out = vec![false; size * size];
        fill_polygon(poly, size, |c, r| out[r * size + c] = true);
        out
    }

    /// Brute-force closed point-in-polygon in floating point, for polygons
    /// whose edges never pass near a pixel centre.
    fn inside_reference(poly: &[FixedPoint], x: f64, y: f64) -> bool {
        let mut inside = false;
        for i in 0..poly.len() {
            let a = poly[i];
            let b = poly[(i + 1) % poly.len()];
            let (ax, ay, bx, by) = (a.x as f64, a.y as f64, b.x as f64, b.y as f64);
            if (ay > y) != (by > y) {
                let xi = ax + (y - ay) * (bx - ax) / (by - ay);
                if x < xi {
                    inside = !inside;
                }
            }
        }
        inside
    }

    #[test]
    fn matches_reference_on_generic_polygon() {
        let size = 32;
        let poly = [
            FixedPoint { x: -3000, y: -2901 },
            FixedPoint { x: 2811, y: -1003 },
            FixedPoint { x: 1207, y: 3333 },
            FixedPoint { x: -61, y: 301 },
            FixedPoint { x: -2503, y: 2705 },
        ];
        let got = covered(&poly, size);
        for r in 0..size {
            for c in 0..size {
                let want = inside_reference(&poly, pixel_center(c, size) as f64, pixel_center(r, size) as f64);
                assert_eq!(got[r * size + c], want, "pixel ({c}, {r})");
            }
        }
    }

    #[test]
    fn boundary_centres_are_covered() {
        // Square whose edges pass exactly through pixel centres.
        let size = 8;
        let e = pixel_center(6, size);
        let s = pixel_center(1, size);
        let poly = [
            FixedPoint { x: s, y: s },
            FixedPoint { x: e, y: s },
            FixedPoint { x: e, y: e },
            FixedPoint { x: s, y: e },
        ];
        let got = covered(&poly, size);
        assert_eq!(got.iter().filter(|v| **v).count(), 36);
    }

    #[test]
    fn degenerate_segment_covers_its_centres() {
        let size = 8;
        let y = pixel_center(3, size);
        let poly = [FixedPoint { x: pixel_center(1, size), y }, FixedPoint { x: pixel_center(5, size), y }];
        let got = covered(&poly, size);
        assert_eq!(got.iter().filter(|v| **v).count(), 5);
    }

    #[test]
    fn mirrored_polygon_gives_mirrored_coverage() {
        let size = 40;
        let poly = [
            FixedPoint { x: -4000, y: -3900 },
            FixedPoint { x: 3000, y: -128 },
            FixedPoint { x: 128 * 7, y: 4100 },
            FixedPoint { x: -1000, y: 128 * 3 },
        ];
        let mirrored: Vec<_> = poly.iter().map(|p| FixedPoint { x: -p.x, y: p.y }).collect();
        let a = covered(&poly, size);
        let b = covered(&mirrored, size);
        for r in 0..size {
            for c in 0..size {
                assert_eq!(a[r * size + c], b[r * size + (size - 1 - c)]);
            }
        }
    }
}
