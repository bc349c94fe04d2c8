//! Multi-granularity camera motion detection.
//!
//! A pass over a run of frames compares every frame with the first one by
//! SSIM and reports the fraction of frames whose score is below a
//! similarity threshold. The whole video gives the coarse verdict; fixed
//! length clips, each against its own first frame, give the fine verdict.
//! The camera is moving only if the coarse pass fires and at least one clip
//! fires.

use std::ops::Range;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ssim::{ssim, SsimConfig};
use crate::video_io::{Frame, VideoSequence};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct McmdConfig {
    /// Similarity threshold for the whole-video pass.
    pub lambda_coarse: f64,
    /// Similarity threshold for the per-clip passes.
    pub lambda_fine: f64,
    /// Fraction of dissimilar frames above which a pass reports motion.
    pub eta: f64,
    pub clip_seconds: f64,
    pub ssim: SsimConfig,
}

impl Default for McmdConfig {
    fn default() -> Self {
        Self {
            lambda_coarse: 0.5,
            lambda_fine: 0.46,
            eta: 0.5,
            clip_seconds: 5.0,
            ssim: SsimConfig::default(),
        }
    }
}

impl McmdConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("lambda_coarse", self.lambda_coarse),
            ("lambda_fine", self.lambda_fine),
            ("eta", self.eta),
        ] {
            if !(v > 0.0 && v < 1.0) {
                return Err(Error::Config(format!("{name} must lie in (0, 1), got {v}")));
            }
        }
        if !(self.clip_seconds.is_finite() && self.clip_seconds > 0.0) {
            return Err(Error::Config(format!(
                "clip_seconds must be positive, got {}",
                self.clip_seconds
            )));
        }
        self.ssim.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClipResult {
    pub start: usize,
    pub end: usize,
    pub fraction: f64,
    pub moving: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CameraMotionResult {
    pub moving: bool,
    pub coarse_fraction: f64,
    pub coarse_moving: bool,
    pub clip_results: Vec<ClipResult>,
    pub num_frames: usize,
    pub fps: f64,
    pub config_used: McmdConfig,
}

impl CameraMotionResult {
    pub fn fine_moving(&self) -> bool {
        self.clip_results.iter().any(|c| c.moving)
    }
}

/// Splits `[0, frame_count)` into consecutive clips of
/// `round(clip_seconds * fps)` frames. A trailing clip of a single frame is
/// merged into its predecessor.
pub fn partition_clips(frame_count: usize, fps: f64, clip_seconds: f64) -> Vec<Range<usize>> {
    if frame_count == 0 {
        return Vec::new();
    }
    let len = ((clip_seconds * fps).round() as usize).max(1);
    let mut clips: Vec<Range<usize>> = (0..frame_count)
        .step_by(len)
        .map(|start| start..(start + len).min(frame_count))
        .collect();
    if clips.len() > 1 && clips.last().is_some_and(|c| c.len() < 2) {
        let tail = clips.pop().unwrap();
        clips.last_mut().unwrap().end = tail.end;
    }
    clips
}

/// SSIM of every frame against the first frame (index 0 scores itself).
pub fn ssim_to_reference(frames: &[Frame], cfg: &SsimConfig) -> Result<Vec<f64>> {
    let Some(reference) = frames.first() else {
        return Ok(Vec::new());
    };
    frames
        .par_iter()
        .map(|f| ssim(reference, f, cfg))
        .collect()
}

fn dissimilar_fraction(series: &[f64], lambda: f64) -> f64 {
    if series.is_empty() {
        return 0.0;
    }
    let count = series.iter().filter(|&&s| s < lambda).count();
    count as f64 / series.len() as f64
}

/// Moving verdict and dissimilar-frame fraction of one run of gray frames.
pub fn moving_score(
    frames: &[Frame],
    lambda: f64,
    eta: f64,
    ssim_cfg: &SsimConfig,
) -> Result<(bool, f64)> {
    let series = ssim_to_reference(frames, ssim_cfg)?;
    let fraction = dissimilar_fraction(&series, lambda);
    Ok((fraction > eta, fraction))
}

/// Per-frame SSIM series for the coarse pass and every clip.
///
/// The series do not depend on the thresholds, so one instance can be
/// classified under many `lambda`/`eta` settings.
#[derive(Debug, Clone, PartialEq)]
pub struct CameraSsim {
    pub fps: f64,
    pub clip_seconds: f64,
    pub ssim_config: SsimConfig,
    pub coarse: Vec<f64>,
    pub clips: Vec<(Range<usize>, Vec<f64>)>,
}

impl CameraSsim {
    pub fn compute(video: &VideoSequence, clip_seconds: f64, ssim_cfg: &SsimConfig) -> Result<Self> {
        let gray = video.grayscale()?;
        let coarse = ssim_to_reference(&gray, ssim_cfg)?;
        let clips = partition_clips(gray.len(), video.fps(), clip_seconds)
            .into_iter()
            .map(|r| {
                let series = if r.start == 0 {
                    // the first clip shares its reference with the coarse pass
                    coarse[r.clone()].to_vec()
                } else {
                    ssim_to_reference(&gray[r.clone()], ssim_cfg)?
                };
                Ok((r, series))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            fps: video.fps(),
            clip_seconds,
            ssim_config: *ssim_cfg,
            coarse,
            clips,
        })
    }

    pub fn classify(&self, cfg: &McmdConfig) -> Result<CameraMotionResult> {
        cfg.validate()?;
        if cfg.clip_seconds != self.clip_seconds || cfg.ssim != self.ssim_config {
            return Err(Error::Invariant(
                "cached ssim series computed under a different clip length or ssim config".into(),
            ));
        }
        let coarse_fraction = dissimilar_fraction(&self.coarse, cfg.lambda_coarse);
        let coarse_moving = coarse_fraction > cfg.eta;
        let clip_results: Vec<ClipResult> = self
            .clips
            .iter()
            .map(|(r, series)| {
                let fraction = dissimilar_fraction(series, cfg.lambda_fine);
                ClipResult {
                    start: r.start,
                    end: r.end,
                    fraction,
                    moving: fraction > cfg.eta,
                }
            })
            .collect();
        let fine_moving = clip_results.iter().any(|c| c.moving);
        Ok(CameraMotionResult {
            moving: coarse_moving && fine_moving,
            coarse_fraction,
            coarse_moving,
            clip_results,
            num_frames: self.coarse.len(),
            fps: self.fps,
            config_used: *cfg,
        })
    }
}

/// Static/moving camera verdict for a whole video.
pub fn detect_camera_motion(video: &VideoSequence, cfg: &McmdConfig) -> Result<CameraMotionResult> {
    cfg.validate()?;
    CameraSsim::compute(video, cfg.clip_seconds, &cfg.ssim)?.classify(cfg)
}
