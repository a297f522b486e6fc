//! Image similarity and head-angle error.

use image::RgbaImage;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SsimConfig {
    /// Odd Gaussian window size.
    pub window: usize,
    pub sigma: f64,
    pub k1: f64,
    pub k2: f64,
    /// Dynamic range of pixel values.
    pub dynamic_range: f64,
}

impl Default for SsimConfig {
    fn default() -> Self {
        Self { window: 11, sigma: 1.5, k1: 0.01, k2: 0.03, dynamic_range: 255.0 }
    }
}

impl SsimConfig {
    pub fn check(&self) -> Result<()> {
        if self.window == 0 || self.window.is_multiple_of(2) {
            return Err(Error::invalid(format!("SSIM window must be odd, got {}", self.window)));
        }
        if self.sigma.is_nan() || self.sigma <= 0.0 {
            return Err(Error::invalid("SSIM sigma must be positive"));
        }
        Ok(())
    }

    pub fn c1(&self) -> f64 {
        (self.k1 * self.dynamic_range).powi(2)
    }

    pub fn c2(&self) -> f64 {
        (self.k2 * self.dynamic_range).powi(2)
    }

    /// Normalized 1-D Gaussian taps.
    pub fn kernel(&self) -> Vec<f64> {
        let h = (self.window / 2) as f64;
        let taps: Vec<f64> = (0..self.window)
            .map(|i| {
                let d = i as f64 - h;
                (-(d * d) / (2.0 * self.sigma * self.sigma)).exp()
            })
            .collect();
        let sum: f64 = taps.iter().sum();
        taps.into_iter().map(|t| t / sum).collect()
    }
}

/// BT.601 luma.
pub fn luma(img: &RgbaImage) -> Vec<f64> {
    img.pixels().map(|p| 0.299 * p.0[0] as f64 + 0.587 * p.0[1] as f64 + 0.114 * p.0[2] as f64).collect()
}

fn blur(src: &[f64], w: usize, h: usize, k: &[f64]) -> Vec<f64> {
    // Valid-region separable filter: output is (w - n + 1) × (h - n + 1).
    let n = k.len();
    let ow = w - n + 1;
    let oh = h - n + 1;
    let mut tmp = vec![0.0; ow * h];
    for y in 0..h {
        for x in 0..ow {
            let mut acc = 0.0;
            for (i, kv) in k.iter().enumerate() {
                acc += kv * src[y * w + x + i];
            }
            tmp[y * ow + x] = acc;
        }
    }
    let mut out = vec![0.0; ow * oh];
    for y in 0..oh {
        for x in 0..ow {
            let mut acc = 0.0;
            for (i, kv) in k.iter().enumerate() {
                acc += kv * tmp[(y + i) * ow + x];
            }
            out[y * ow + x] = acc;
        }
    }
    out
}

/// Mean SSIM over luma, averaged over windows whose centre pixel is
/// foreground (alpha > 0) in either image. Images with no foreground at all
/// are evaluated over every window.
pub fn ssim(a: &RgbaImage, b: &RgbaImage, cfg: &SsimConfig) -> Result<f64> {
    cfg.check()?;
    if a.dimensions() != b.dimensions() {
        return Err(Error::invalid(format!("image sizes differ: {:?} vs {:?}", a.dimensions(), b.dimensions())));
    }
    let (w, h) = (a.width() as usize, a.height() as usize);
    if w < cfg.window || h < cfg.window {
        return Err(Error::invalid(format!("images smaller than the {0}×{0} window", cfg.window)));
    }
    let k = cfg.kernel();
    let la = luma(a);
    let lb = luma(b);
    let aa: Vec<f64> = la.iter().map(|v| v * v).collect();
    let bb: Vec<f64> = lb.iter().map(|v| v * v).collect();
    let ab: Vec<f64> = la.iter().zip(&lb).map(|(x, y)| x * y).collect();
    let mu_a = blur(&la, w, h, &k);
    let mu_b = blur(&lb, w, h, &k);
    let e_aa = blur(&aa, w, h, &k);
    let e_bb = blur(&bb, w, h, &k);
    let e_ab = blur(&ab, w, h, &k);

    let half = cfg.window / 2;
    let ow = w - cfg.window + 1;
    let fg = |x: usize, y: usize| a.get_pixel(x as u32, y as u32).0[3] > 0 || b.get_pixel(x as u32, y as u32).0[3] > 0;
    let any_fg = (0..h).any(|y| (0..w).any(|x| fg(x, y)));
    let (c1, c2) = (cfg.c1(), cfg.c2());

    let mut sum = 0.0;
    let mut count = 0usize;
    for i in 0..mu_a.len() {
        let (x, y) = (i % ow, i / ow);
        if any_fg && !fg(x + half, y + half) {
            continue;
        }
        let (ma, mb) = (mu_a[i], mu_b[i]);
        let va = e_aa[i] - ma * ma;
        let vb = e_bb[i] - mb * mb;
        let cov = e_ab[i] - ma * mb;
        let num = (2.0 * (ma * mb) + c1) * (2.0 * cov + c2);
        let den = (ma * ma + mb * mb + c1) * (va + vb + c2);
        sum += num / den;
        count += 1;
    }
    Ok(sum / count as f64)
}

/// Mean absolute per-axis difference between two angle triples, in degrees.
pub fn head_angle_error(predicted_deg: &[f64; 3], target_deg: &[f64; 3]) -> f64 {
    predicted_deg.iter().zip(target_deg).map(|(p, t)| (p - t).abs()).sum::<f64>() / 3.0
}
