//! TAP-Vid style Jaccard and Average Jaccard.
//!
//! For a pixel threshold `delta`, every evaluated (point, frame) slot is
//! scored in metric pixel space:
//!
//! * TP: predicted visible, truly visible, within `delta`
//! * FP: predicted visible, and truly occluded or farther than `delta`
//! * FN: truly visible, and predicted occluded or farther than `delta`
//!
//! A visible/visible slot outside the threshold is both FP and FN. The
//! Jaccard is `tp / (tp + fp + fn)` (1.0 when nothing is counted) and the
//! Average Jaccard is its mean over the thresholds.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tracks::{load_tracks, TrackSet};
use crate::video_io;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MetricsConfig {
    /// Pixel radii, strictly increasing.
    pub thresholds: Vec<f64>,
    pub eval_width: u32,
    pub eval_height: u32,
    pub exclude_query_frame: bool,
}

impl Default for MetricsConfig {
    fn default() -> Self {
        Self {
            thresholds: vec![1.0, 2.0, 4.0, 8.0, 16.0],
            eval_width: 256,
            eval_height: 256,
            exclude_query_frame: true,
        }
    }
}

impl MetricsConfig {
    pub fn validate(&self) -> Result<()> {
        if self.thresholds.is_empty() {
            return Err(Error::Config("at least one threshold is required".into()));
        }
        if self.thresholds.iter().any(|t| !(t.is_finite() && *t > 0.0)) {
            return Err(Error::Config("thresholds must be positive".into()));
        }
        if self.thresholds.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config("thresholds must be strictly increasing".into()));
        }
        if self.eval_width == 0 || self.eval_height == 0 {
            return Err(Error::Config("evaluation resolution must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdRecord {
    pub delta: f64,
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub jaccard: f64,
}

impl ThresholdRecord {
    fn from_counts(delta: f64, tp: u64, fp: u64, fn_: u64) -> Self {
        let denom = tp + fp + fn_;
        let jaccard = if denom == 0 {
            1.0
        } else {
            tp as f64 / denom as f64
        };
        Self {
            delta,
            tp,
            fp,
            fn_,
            jaccard,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub thresholds: Vec<ThresholdRecord>,
    pub average_jaccard: f64,
    pub num_points: usize,
    pub num_frames: usize,
    /// Number of (point, frame) slots scored.
    pub evaluated_slots: usize,
}

fn check_pair(pred: &TrackSet, gt: &TrackSet) -> Result<()> {
    if pred.num_points() != gt.num_points() || pred.num_frames() != gt.num_frames() {
        return Err(Error::ShapeMismatch(format!(
            "prediction is {}x{}, ground truth {}x{}",
            pred.num_points(),
            pred.num_frames(),
            gt.num_points(),
            gt.num_frames()
        )));
    }
    if pred.queries().iter().map(|q| q.frame).ne(gt.queries().iter().map(|q| q.frame)) {
        return Err(Error::ShapeMismatch(
            "prediction and ground truth query frames differ".into(),
        ));
    }
    Ok(())
}

/// Scores the points selected by `mask` (all points when `None`).
pub fn evaluate_points(
    pred: &TrackSet,
    gt: &TrackSet,
    cfg: &MetricsConfig,
    mask: Option<&[bool]>,
) -> Result<MetricsReport> {
    cfg.validate()?;
    check_pair(pred, gt)?;
    if let Some(mask) = mask {
        if mask.len() != gt.num_points() {
            return Err(Error::ShapeMismatch(format!(
                "point mask of {} entries for {} points",
                mask.len(),
                gt.num_points()
            )));
        }
    }
    let (sw, sh) = (cfg.eval_width as f64, cfg.eval_height as f64);
    let k = cfg.thresholds.len();
    let mut tp = vec![0u64; k];
    let mut fp = vec![0u64; k];
    let mut fn_ = vec![0u64; k];
    let mut points = 0;
    let mut slots = 0;

    for i in 0..gt.num_points() {
        if mask.is_some_and(|m| !m[i]) {
            continue;
        }
        points += 1;
        let query = gt.queries()[i].frame;
        let (pxy, pvis) = (pred.point_xy(i), pred.point_visibility(i));
        let (gxy, gvis) = (gt.point_xy(i), gt.point_visibility(i));
        for t in 0..gt.num_frames() {
            if cfg.exclude_query_frame && t == query {
                continue;
            }
            slots += 1;
            let (pv, gv) = (pvis[t], gvis[t]);
            if !pv && !gv {
                continue;
            }
            let dx = (pxy[t][0] as f64 - gxy[t][0] as f64) * sw;
            let dy = (pxy[t][1] as f64 - gxy[t][1] as f64) * sh;
            let d = dx.hypot(dy);
            for (j, &delta) in cfg.thresholds.iter().enumerate() {
                let within = d <= delta;
                if pv && gv && within {
                    tp[j] += 1;
                } else {
                    fp[j] += pv as u64;
                    fn_[j] += gv as u64;
                }
            }
        }
    }

    let records: Vec<ThresholdRecord> = cfg
        .thresholds
        .iter()
        .enumerate()
        .map(|(j, &delta)| ThresholdRecord::from_counts(delta, tp[j], fp[j], fn_[j]))
        .collect();
    let average_jaccard = records.iter().map(|r| r.jaccard).sum::<f64>() / records.len() as f64;
    Ok(MetricsReport {
        thresholds: records,
        average_jaccard,
        num_points: points,
        num_frames: gt.num_frames(),
        evaluated_slots: slots,
    })
}

/// Counts and Jaccard at a single pixel threshold.
pub fn jaccard_at(
    pred: &TrackSet,
    gt: &TrackSet,
    delta_px: f64,
    cfg: &MetricsConfig,
) -> Result<ThresholdRecord> {
    let single = MetricsConfig {
        thresholds: vec![delta_px],
        ..cfg.clone()
    };
    let mut report = evaluate_points(pred, gt, &single, None)?;
    Ok(report.thresholds.remove(0))
}

pub fn average_jaccard(pred: &TrackSet, gt: &TrackSet, cfg: &MetricsConfig) -> Result<MetricsReport> {
    evaluate_points(pred, gt, cfg, None)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VideoScore {
    pub video: String,
    pub report: MetricsReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetReport {
    pub videos: Vec<VideoScore>,
    /// Unweighted mean of the per-video Average Jaccards.
    pub mean_average_jaccard: f64,
}

impl DatasetReport {
    pub fn from_scores(videos: Vec<VideoScore>) -> Self {
        let mean_average_jaccard = if videos.is_empty() {
            1.0
        } else {
            videos.iter().map(|v| v.report.average_jaccard).sum::<f64>() / videos.len() as f64
        };
        Self {
            videos,
            mean_average_jaccard,
        }
    }

    /// `video,aj,j@d1,...` per video, then a `mean` row.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("video,aj");
        if let Some(first) = self.videos.first() {
            for r in &first.report.thresholds {
                let _ = write!(out, ",j@{}", r.delta);
            }
        }
        out.push('\n');
        for v in &self.videos {
            let _ = write!(out, "{},{}", v.video, v.report.average_jaccard);
            for r in &v.report.thresholds {
                let _ = write!(out, ",{}", r.jaccard);
            }
            out.push('\n');
        }
        let _ = writeln!(out, "mean,{}", self.mean_average_jaccard);
        out
    }
}

fn track_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file())
        .filter(|p| {
            matches!(
                p.extension().and_then(|e| e.to_str()),
                Some("fpdt") | Some("json")
            )
        })
        .collect();
    files.sort();
    Ok(files)
}

/// Scores every ground-truth file in `gt_dir` against the prediction with
/// the same file stem in `pred_dir`.
pub fn evaluate_dirs(pred_dir: &Path, gt_dir: &Path, cfg: &MetricsConfig) -> Result<DatasetReport> {
    let preds = track_files(pred_dir)?;
    let gts = track_files(gt_dir)?;
    let pairs: Vec<(String, PathBuf, PathBuf)> = gts
        .into_iter()
        .filter(|p| p.file_name().and_then(|n| n.to_str()) != Some(video_io::MANIFEST_NAME))
        .map(|gt| {
            let stem = gt.file_stem().unwrap_or_default().to_os_string();
            let pred = preds
                .iter()
                .find(|p| p.file_stem() == Some(stem.as_os_str()))
                .cloned()
                .ok_or_else(|| {
                    Error::Config(format!(
                        "no prediction for {} in {}",
                        gt.display(),
                        pred_dir.display()
                    ))
                })?;
            Ok((stem.to_string_lossy().into_owned(), pred, gt))
        })
        .collect::<Result<_>>()?;
    let videos = pairs
        .par_iter()
        .map(|(name, pred, gt)| {
            let report = average_jaccard(&load_tracks(pred)?, &load_tracks(gt)?, cfg)?;
            Ok(VideoScore {
                video: name.clone(),
                report,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(DatasetReport::from_scores(videos))
}
