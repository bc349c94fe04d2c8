//! Structural similarity between two grayscale frames.
//!
//! Uniform (box) window, statistics over every window position that fits
//! entirely inside the frame, mean of the resulting map. Window sums are
//! taken separably (rows, then columns) with direct summation rather than
//! running sums so the result tracks the textbook per-window definition to
//! rounding error.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::video_io::Frame;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SsimConfig {
    pub window_size: usize,
    pub k1: f64,
    pub k2: f64,
    pub data_range: f64,
    /// Normalize (co)variances by `N - 1` instead of `N`.
    pub sample_covariance: bool,
    /// Gaussian weighting is not supported; setting this fails validation.
    pub gaussian_weights: bool,
}

impl Default for SsimConfig {
    fn default() -> Self {
        Self {
            window_size: 7,
            k1: 0.01,
            k2: 0.03,
            data_range: 1.0,
            sample_covariance: true,
            gaussian_weights: false,
        }
    }
}

impl SsimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.window_size < 3 || self.window_size.is_multiple_of(2) {
            return Err(Error::Config(format!(
                "ssim window_size must be odd and >= 3, got {}",
                self.window_size
            )));
        }
        for (name, v) in [
            ("k1", self.k1),
            ("k2", self.k2),
            ("data_range", self.data_range),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Config(format!("ssim {name} must be positive, got {v}")));
            }
        }
        if self.gaussian_weights {
            return Err(Error::Config(
                "gaussian-weighted ssim is not supported; use the uniform window".into(),
            ));
        }
        Ok(())
    }

    pub fn c1(&self) -> f64 {
        (self.k1 * self.data_range).powi(2)
    }

    pub fn c2(&self) -> f64 {
        (self.k2 * self.data_range).powi(2)
    }

    fn covariance_norm(&self) -> f64 {
        let n = (self.window_size * self.window_size) as f64;
        if self.sample_covariance {
            n - 1.0
        } else {
            n
        }
    }
}

/// Sums of every `win x win` window fully inside a `width x height` image,
/// laid out row-major over the `(width - win + 1) x (height - win + 1)` grid.
fn window_sums(data: &[f64], width: usize, height: usize, win: usize) -> Vec<f64> {
    let ow = width - win + 1;
    let oh = height - win + 1;
    let mut rows = vec![0.0; height * ow];
    for y in 0..height {
        let line = &data[y * width..(y + 1) * width];
        let out = &mut rows[y * ow..(y + 1) * ow];
        for (x, o) in out.iter_mut().enumerate() {
            *o = line[x..x + win].iter().sum();
        }
    }
    let mut sums = vec![0.0; oh * ow];
    for oy in 0..oh {
        let out = &mut sums[oy * ow..(oy + 1) * ow];
        for k in 0..win {
            let line = &rows[(oy + k) * ow..(oy + k + 1) * ow];
            for (o, v) in out.iter_mut().zip(line) {
                *o += v;
            }
        }
    }
    sums
}

fn check_pair(a: &Frame, b: &Frame, cfg: &SsimConfig) -> Result<()> {
    cfg.validate()?;
    if !a.is_gray() || !b.is_gray() {
        return Err(Error::InvalidFrame("ssim expects single-channel frames".into()));
    }
    if a.width() != b.width() || a.height() != b.height() {
        return Err(Error::ShapeMismatch(format!(
            "ssim of {}x{} against {}x{}",
            a.width(),
            a.height(),
            b.width(),
            b.height()
        )));
    }
    let min_side = a.width().min(a.height()) as usize;
    if cfg.window_size > min_side {
        return Err(Error::Config(format!(
            "ssim window {} larger than frame side {min_side}",
            cfg.window_size
        )));
    }
    Ok(())
}

/// Mean SSIM between two gray frames of equal size.
pub fn ssim(a: &Frame, b: &Frame, cfg: &SsimConfig) -> Result<f64> {
    check_pair(a, b, cfg)?;
    let (w, h) = (a.width() as usize, a.height() as usize);
    let win = cfg.window_size;
    let n = (win * win) as f64;
    let norm = cfg.covariance_norm();
    let (c1, c2) = (cfg.c1(), cfg.c2());

    let x: Vec<f64> = a.pixels().iter().map(|&v| v as f64).collect();
    let y: Vec<f64> = b.pixels().iter().map(|&v| v as f64).collect();
    let xx: Vec<f64> = x.iter().map(|v| v * v).collect();
    let yy: Vec<f64> = y.iter().map(|v| v * v).collect();
    let xy: Vec<f64> = x.iter().zip(&y).map(|(p, q)| p * q).collect();

    let sx = window_sums(&x, w, h, win);
    let sy = window_sums(&y, w, h, win);
    let sxx = window_sums(&xx, w, h, win);
    let syy = window_sums(&yy, w, h, win);
    let sxy = window_sums(&xy, w, h, win);

    let mut total = 0.0;
    for i in 0..sx.len() {
        let mx = sx[i] / n;
        let my = sy[i] / n;
        let vx = (sxx[i] - sx[i] * mx) / norm;
        let vy = (syy[i] - sy[i] * my) / norm;
        let cxy = (sxy[i] - sx[i] * my) / norm;
        total += ((2.0 * mx * my + c1) * (2.0 * cxy + c2))
            / ((mx * mx + my * my + c1) * (vx + vy + c2));
    }
    Ok(total / sx.len() as f64)
}
