//! Moving point detection: a track is static when the population standard
//! deviation of its visible x and y coordinates are both below `rho`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tracks::TrackSet;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MpdConfig {
    /// Deviation threshold in normalized coordinates.
    pub rho: f64,
    /// Points with fewer visible frames than this are reported static.
    pub min_visible: usize,
}

impl Default for MpdConfig {
    fn default() -> Self {
        Self {
            rho: 0.00125,
            min_visible: 2,
        }
    }
}

impl MpdConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.rho.is_finite() && self.rho > 0.0) {
            return Err(Error::Config(format!("rho must be positive, got {}", self.rho)));
        }
        if self.min_visible == 0 {
            return Err(Error::Config("min_visible must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointDeviation {
    pub index: usize,
    pub sigma_x: f64,
    pub sigma_y: f64,
    pub n_visible: usize,
    #[serde(rename = "static")]
    pub is_static: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointMotionFlags {
    pub rho: f64,
    pub min_visible: usize,
    pub points: Vec<PointDeviation>,
}

impl PointMotionFlags {
    pub fn static_flags(&self) -> Vec<bool> {
        self.points.iter().map(|p| p.is_static).collect()
    }

    pub fn is_static(&self, i: usize) -> bool {
        self.points[i].is_static
    }

    pub fn static_count(&self) -> usize {
        self.points.iter().filter(|p| p.is_static).count()
    }
}

/// Population standard deviation of the visible x and y coordinates, and
/// the number of visible frames. Fewer than two visible frames give zero.
pub fn point_deviation<T>(xy: &[[T; 2]], visible: &[bool]) -> (f64, f64, usize)
where
    T: Copy + Into<f64>,
{
    debug_assert_eq!(xy.len(), visible.len());
    let pts = || {
        xy.iter()
            .zip(visible)
            .filter(|(_, &v)| v)
            .map(|(p, _)| (p[0].into(), p[1].into()))
    };
    let n = pts().count();
    if n < 2 {
        return (0.0, 0.0, n);
    }
    let (sx, sy) = pts().fold((0.0, 0.0), |(ax, ay), (x, y)| (ax + x, ay + y));
    let (mx, my) = (sx / n as f64, sy / n as f64);
    let (vx, vy) = pts().fold((0.0, 0.0), |(ax, ay), (x, y)| {
        (ax + (x - mx) * (x - mx), ay + (y - my) * (y - my))
    });
    ((vx / n as f64).sqrt(), (vy / n as f64).sqrt(), n)
}

pub fn detect_static_points(ts: &TrackSet, cfg: &MpdConfig) -> Result<PointMotionFlags> {
    cfg.validate()?;
    let points = (0..ts.num_points())
        .map(|i| {
            let (sigma_x, sigma_y, n_visible) =
                point_deviation(ts.point_xy(i), ts.point_visibility(i));
            let is_static =
                n_visible < cfg.min_visible || (sigma_x < cfg.rho && sigma_y < cfg.rho);
            PointDeviation {
                index: i,
                sigma_x,
                sigma_y,
                n_visible,
                is_static,
            }
        })
        .collect();
    Ok(PointMotionFlags {
        rho: cfg.rho,
        min_visible: cfg.min_visible,
        points,
    })
}
