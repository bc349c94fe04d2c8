//! End-to-end orchestration: camera motion detection, point motion
//! detection, fusion and optional scoring, over a batch of videos; plus the
//! parameter sweep harness.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::{self, Write as _};
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dtc::{fuse, FusionPolicy};
use crate::error::{Error, Result, Stage, StageExt};
use crate::mcmd::{CameraMotionResult, CameraSsim, McmdConfig};
use crate::metrics::{evaluate_points, MetricsConfig, MetricsReport};
use crate::mpd::{MpdConfig, PointMotionFlags};
use crate::synth::{read_truth, SceneTruth};
use crate::tracks::{load_tracks, save_tracks, TrackFormat, TrackSet};
use crate::video_io::{load_frame_sequence, VideoSequence};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VideoConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub frames_dir: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub manifest: Option<PathBuf>,
    /// Source label -> track file.
    pub sources: BTreeMap<String, PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ground_truth: Option<PathBuf>,
    /// Synthetic truth labels (`truth.json`) for per-category scores.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truth: Option<PathBuf>,
}

/// A fusion policy given inline or as a path to `policy.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PolicySource {
    Inline(FusionPolicy),
    Path(PathBuf),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub videos: Vec<VideoConfig>,
    pub policy: PolicySource,
    #[serde(default)]
    pub mcmd: McmdConfig,
    #[serde(default)]
    pub mpd: MpdConfig,
    #[serde(default)]
    pub metrics: MetricsConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out_dir: Option<PathBuf>,
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::json(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::json(path, e))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

impl PipelineConfig {
    /// Reads a config file; relative paths inside it are resolved against
    /// the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let mut cfg: PipelineConfig = read_json(path).map_err(|e| match e {
            Error::Json { path, source } if source.is_data() || source.is_syntax() => {
                Error::Config(format!("{}: {source}", path.display()))
            }
            e => e,
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.resolve_paths(base);
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        for v in &mut self.videos {
            v.frames_dir = resolve(base, &v.frames_dir);
            v.manifest = v.manifest.as_deref().map(|p| resolve(base, p));
            for p in v.sources.values_mut() {
                *p = resolve(base, p);
            }
            v.ground_truth = v.ground_truth.as_deref().map(|p| resolve(base, p));
            v.truth = v.truth.as_deref().map(|p| resolve(base, p));
        }
        if let PolicySource::Path(p) = &mut self.policy {
            *p = resolve(base, p);
        }
        self.out_dir = self.out_dir.as_deref().map(|p| resolve(base, p));
    }

    pub fn video_names(&self) -> Vec<String> {
        self.videos
            .iter()
            .enumerate()
            .map(|(i, v)| v.name.clone().unwrap_or_else(|| format!("video{i:03}")))
            .collect()
    }

    pub fn settings(&self) -> Result<Settings> {
        let policy = match &self.policy {
            PolicySource::Inline(p) => p.clone(),
            PolicySource::Path(p) => read_json(p).map_err(|e| match e {
                Error::Io { .. } => e,
                other => Error::Config(other.to_string()),
            })?,
        };
        let settings = Settings {
            policy,
            mcmd: self.mcmd,
            mpd: self.mpd,
            metrics: self.metrics.clone(),
        };
        settings.validate()?;
        Ok(settings)
    }

    pub fn validate(&self) -> Result<()> {
        if self.videos.is_empty() {
            return Err(Error::Config("pipeline config lists no videos".into()));
        }
        let names = self.video_names();
        let unique: BTreeSet<&String> = names.iter().collect();
        if unique.len() != names.len() {
            return Err(Error::Config("video names must be unique".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Settings {
    pub policy: FusionPolicy,
    pub mcmd: McmdConfig,
    pub mpd: MpdConfig,
    pub metrics: MetricsConfig,
}

impl Settings {
    pub fn new(policy: FusionPolicy) -> Self {
        Self {
            policy,
            mcmd: McmdConfig::default(),
            mpd: MpdConfig::default(),
            metrics: MetricsConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.mcmd.validate()?;
        self.mpd.validate()?;
        self.metrics.validate()
    }
}

/// Everything needed to process one video, already in memory.
#[derive(Debug, Clone)]
pub struct VideoInputs {
    pub name: String,
    pub video: VideoSequence,
    pub sources: BTreeMap<String, TrackSet>,
    pub ground_truth: Option<TrackSet>,
    pub truth: Option<SceneTruth>,
}

pub fn load_video_inputs(name: &str, v: &VideoConfig) -> Result<VideoInputs> {
    let video = load_frame_sequence(&v.frames_dir, v.manifest.as_deref())?;
    let mut sources = BTreeMap::new();
    for (label, path) in &v.sources {
        let mut ts = load_tracks(path)?;
        ts.set_source_name(label.clone());
        sources.insert(label.clone(), ts);
    }
    let ground_truth = v.ground_truth.as_deref().map(load_tracks).transpose()?;
    let truth = v.truth.as_deref().map(read_truth).transpose()?;
    if let (Some(t), Some(gt)) = (&truth, &ground_truth) {
        if t.static_points.len() != gt.num_points() {
            return Err(Error::ShapeMismatch(format!(
                "truth labels {} points, ground truth has {}",
                t.static_points.len(),
                gt.num_points()
            )));
        }
    }
    Ok(VideoInputs {
        name: name.to_owned(),
        video,
        sources,
        ground_truth,
        truth,
    })
}

/// Per-point condition used to break scores down like the challenge tables.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PointCategory {
    StaticCameraStaticPoint,
    StaticCameraMovingPoint,
    MovingCameraMovingPoint,
}

impl PointCategory {
    pub const ALL: [PointCategory; 3] = [
        PointCategory::StaticCameraStaticPoint,
        PointCategory::StaticCameraMovingPoint,
        PointCategory::MovingCameraMovingPoint,
    ];

    pub fn label(&self) -> &'static str {
        match self {
            PointCategory::StaticCameraStaticPoint => "sc_sp",
            PointCategory::StaticCameraMovingPoint => "sc_mp",
            PointCategory::MovingCameraMovingPoint => "mc_mp",
        }
    }

    fn of(truth: &SceneTruth, point: usize) -> Self {
        if truth.camera_moving {
            PointCategory::MovingCameraMovingPoint
        } else if truth.static_points[point] {
            PointCategory::StaticCameraStaticPoint
        } else {
            PointCategory::StaticCameraMovingPoint
        }
    }
}

/// Average Jaccard restricted to each category; `None` when the video has
/// no point of that category.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct CategoryScores {
    pub sc_sp: Option<f64>,
    pub sc_mp: Option<f64>,
    pub mc_mp: Option<f64>,
}

impl CategoryScores {
    fn get(&self, c: PointCategory) -> Option<f64> {
        match c {
            PointCategory::StaticCameraStaticPoint => self.sc_sp,
            PointCategory::StaticCameraMovingPoint => self.sc_mp,
            PointCategory::MovingCameraMovingPoint => self.mc_mp,
        }
    }

    fn set(&mut self, c: PointCategory, v: Option<f64>) {
        match c {
            PointCategory::StaticCameraStaticPoint => self.sc_sp = v,
            PointCategory::StaticCameraMovingPoint => self.sc_mp = v,
            PointCategory::MovingCameraMovingPoint => self.mc_mp = v,
        }
    }
}

pub fn category_scores(
    pred: &TrackSet,
    gt: &TrackSet,
    truth: &SceneTruth,
    cfg: &MetricsConfig,
) -> Result<CategoryScores> {
    let mut scores = CategoryScores::default();
    for c in PointCategory::ALL {
        let mask: Vec<bool> = (0..gt.num_points())
            .map(|i| PointCategory::of(truth, i) == c)
            .collect();
        if mask.iter().any(|&m| m) {
            let report = evaluate_points(pred, gt, cfg, Some(&mask))?;
            scores.set(c, Some(report.average_jaccard));
        }
    }
    Ok(scores)
}

#[derive(Debug, Clone)]
pub struct VideoOutcome {
    pub name: String,
    pub fused: TrackSet,
    pub camera: CameraMotionResult,
    pub point_flags: Option<PointMotionFlags>,
    pub selected: Vec<String>,
    pub metrics: Option<MetricsReport>,
    pub categories: Option<CategoryScores>,
}

fn process_with_camera(
    inputs: &VideoInputs,
    camera: CameraMotionResult,
    settings: &Settings,
) -> Result<VideoOutcome> {
    let fused = fuse(&inputs.sources, &camera, &settings.policy, &settings.mpd).stage(Stage::Fusion)?;
    let (metrics, categories) = match &inputs.ground_truth {
        Some(gt) => {
            let report =
                evaluate_points(&fused.tracks, gt, &settings.metrics, None).stage(Stage::Evaluation)?;
            let cats = inputs
                .truth
                .as_ref()
                .map(|t| category_scores(&fused.tracks, gt, t, &settings.metrics))
                .transpose()
                .stage(Stage::Evaluation)?;
            (Some(report), cats)
        }
        None => (None, None),
    };
    Ok(VideoOutcome {
        name: inputs.name.clone(),
        fused: fused.tracks,
        camera,
        point_flags: fused.point_flags,
        selected: fused.selected,
        metrics,
        categories,
    })
}

fn camera_ssim(inputs: &VideoInputs, mcmd: &McmdConfig) -> Result<CameraSsim> {
    mcmd.validate().stage(Stage::CameraMotion)?;
    CameraSsim::compute(&inputs.video, mcmd.clip_seconds, &mcmd.ssim).stage(Stage::CameraMotion)
}

/// Camera detection, point detection (static camera only), fusion, and
/// scoring when ground truth is present.
pub fn process_video(inputs: &VideoInputs, settings: &Settings) -> Result<VideoOutcome> {
    let camera = camera_ssim(inputs, &settings.mcmd)?
        .classify(&settings.mcmd)
        .stage(Stage::CameraMotion)?;
    process_with_camera(inputs, camera, settings)
}

/// Dataset-level scores: unweighted means over videos.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Summary {
    pub average_jaccard: Option<f64>,
    pub sc_sp: Option<f64>,
    pub sc_mp: Option<f64>,
    pub mc_mp: Option<f64>,
    pub moving_cameras: usize,
    pub static_points_flagged: usize,
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

pub fn summarize(videos: &[VideoOutcome]) -> Summary {
    let mut cats = CategoryScores::default();
    for c in PointCategory::ALL {
        cats.set(
            c,
            mean(videos.iter().filter_map(|v| v.categories.and_then(|s| s.get(c)))),
        );
    }
    Summary {
        average_jaccard: mean(videos.iter().filter_map(|v| v.metrics.as_ref()).map(|m| m.average_jaccard)),
        sc_sp: cats.sc_sp,
        sc_mp: cats.sc_mp,
        mc_mp: cats.mc_mp,
        moving_cameras: videos.iter().filter(|v| v.camera.moving).count(),
        static_points_flagged: videos
            .iter()
            .filter_map(|v| v.point_flags.as_ref())
            .map(|f| f.static_count())
            .sum(),
    }
}

#[derive(Debug, Clone)]
pub struct BatchOutcome {
    pub videos: Vec<VideoOutcome>,
    pub summary: Summary,
}

/// Processes every video; videos run in parallel, results keep input order.
pub fn run_batch(inputs: &[VideoInputs], settings: &Settings) -> Result<BatchOutcome> {
    settings.validate()?;
    let videos = inputs
        .par_iter()
        .map(|v| process_video(v, settings))
        .collect::<Result<Vec<_>>>()?;
    let summary = summarize(&videos);
    Ok(BatchOutcome { videos, summary })
}

pub fn load_all_inputs(cfg: &PipelineConfig) -> Result<Vec<VideoInputs>> {
    cfg.validate()?;
    let names = cfg.video_names();
    cfg.videos
        .par_iter()
        .zip(names.par_iter())
        .map(|(v, name)| load_video_inputs(name, v).stage(Stage::Load))
        .collect()
}

/// Loads, runs and (when `out_dir` is set) writes all artifacts.
pub fn run_pipeline(cfg: &PipelineConfig) -> Result<BatchOutcome> {
    let settings = cfg.settings().stage(Stage::Load)?;
    let inputs = load_all_inputs(cfg)?;
    let outcome = run_batch(&inputs, &settings)?;
    if let Some(dir) = &cfg.out_dir {
        write_artifacts(&outcome, dir).stage(Stage::Output)?;
    }
    Ok(outcome)
}

#[derive(Serialize)]
struct PointsReport<'a> {
    selected: &'a [String],
    #[serde(skip_serializing_if = "Option::is_none")]
    flags: Option<&'a PointMotionFlags>,
}

#[derive(Serialize)]
struct MetricsArtifact<'a> {
    #[serde(flatten)]
    report: &'a MetricsReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    categories: Option<&'a CategoryScores>,
}

/// Per video `<out>/<name>/{camera.json, points.json, fused.fpdt,
/// metrics.json}`, plus `<out>/summary.json`.
pub fn write_artifacts(outcome: &BatchOutcome, out_dir: &Path) -> Result<()> {
    for v in &outcome.videos {
        let dir = out_dir.join(&v.name);
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        write_json(&dir.join("camera.json"), &v.camera)?;
        write_json(
            &dir.join("points.json"),
            &PointsReport {
                selected: &v.selected,
                flags: v.point_flags.as_ref(),
            },
        )?;
        save_tracks(&v.fused, &dir.join("fused.fpdt"), TrackFormat::Binary)?;
        if let Some(report) = &v.metrics {
            write_json(
                &dir.join("metrics.json"),
                &MetricsArtifact {
                    report,
                    categories: v.categories.as_ref(),
                },
            )?;
        }
    }
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    write_json(&out_dir.join("summary.json"), &outcome.summary)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepParam {
    Rho,
    LambdaCoarse,
    LambdaFine,
    Eta,
}

impl SweepParam {
    pub fn name(&self) -> &'static str {
        match self {
            SweepParam::Rho => "rho",
            SweepParam::LambdaCoarse => "lambda_coarse",
            SweepParam::LambdaFine => "lambda_fine",
            SweepParam::Eta => "eta",
        }
    }

    /// Settings with this parameter replaced by `value`.
    pub fn apply(&self, settings: &Settings, value: f64) -> Settings {
        let mut s = settings.clone();
        match self {
            SweepParam::Rho => s.mpd.rho = value,
            SweepParam::LambdaCoarse => s.mcmd.lambda_coarse = value,
            SweepParam::LambdaFine => s.mcmd.lambda_fine = value,
            SweepParam::Eta => s.mcmd.eta = value,
        }
        s
    }
}

impl fmt::Display for SweepParam {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SweepParam {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rho" => Ok(SweepParam::Rho),
            "lambda_coarse" | "lambda-coarse" => Ok(SweepParam::LambdaCoarse),
            "lambda_fine" | "lambda-fine" => Ok(SweepParam::LambdaFine),
            "eta" => Ok(SweepParam::Eta),
            other => Err(Error::Config(format!("unknown sweep parameter `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub value: f64,
    pub summary: Summary,
}

/// Re-runs the affected stages for each value. SSIM series are computed
/// once per video; for `rho` the camera verdicts are reused as well.
pub fn sweep_inputs(
    inputs: &[VideoInputs],
    settings: &Settings,
    param: SweepParam,
    values: &[f64],
) -> Result<Vec<SweepRow>> {
    if values.len() < 2 {
        return Err(Error::Config(format!(
            "a sweep needs >= 2 values, got {}",
            values.len()
        )));
    }
    settings.validate()?;
    for v in values {
        param.apply(settings, *v).validate()?;
    }
    if let Some(v) = inputs.iter().find(|v| v.ground_truth.is_none()) {
        return Err(Error::Config(format!(
            "sweep needs ground truth; video `{}` has none",
            v.name
        )));
    }

    let ssim = inputs
        .par_iter()
        .map(|v| camera_ssim(v, &settings.mcmd))
        .collect::<Result<Vec<_>>>()?;
    let base_cameras = match param {
        SweepParam::Rho => Some(
            ssim.iter()
                .map(|s| s.classify(&settings.mcmd).stage(Stage::CameraMotion))
                .collect::<Result<Vec<_>>>()?,
        ),
        _ => None,
    };

    values
        .iter()
        .map(|&value| {
            let s = param.apply(settings, value);
            let videos = inputs
                .par_iter()
                .enumerate()
                .map(|(i, v)| {
                    let camera = match &base_cameras {
                        Some(c) => c[i].clone(),
                        None => ssim[i].classify(&s.mcmd).stage(Stage::CameraMotion)?,
                    };
                    process_with_camera(v, camera, &s)
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(SweepRow {
                value,
                summary: summarize(&videos),
            })
        })
        .collect()
}

pub fn sweep(cfg: &PipelineConfig, param: SweepParam, values: &[f64]) -> Result<Vec<SweepRow>> {
    let settings = cfg.settings().stage(Stage::Load)?;
    let inputs = load_all_inputs(cfg)?;
    sweep_inputs(&inputs, &settings, param, values)
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// `<param>,sc_sp_aj,sc_mp_aj,mc_mp_aj,aj`, one row per value. Categories
/// absent from the suite are left empty.
pub fn sweep_csv(param: SweepParam, rows: &[SweepRow]) -> String {
    let mut out = format!("{param},sc_sp_aj,sc_mp_aj,mc_mp_aj,aj\n");
    for r in rows {
        let s = &r.summary;
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            r.value,
            opt(s.sc_sp),
            opt(s.sc_mp),
            opt(s.mc_mp),
            opt(s.average_jaccard)
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sweep_param_parsing() {
        assert_eq!("rho".parse::<SweepParam>().unwrap(), SweepParam::Rho);
        assert_eq!("lambda-fine".parse::<SweepParam>().unwrap(), SweepParam::LambdaFine);
        assert!("gamma".parse::<SweepParam>().is_err());
    }

    #[test]
    fn sweep_needs_two_values() {
        let settings = Settings::new(FusionPolicy::single("a"));
        let err = sweep_inputs(&[], &settings, SweepParam::Rho, &[0.001]).unwrap_err();
        assert!(err.to_string().contains(">= 2 values"));
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn csv_shape() {
        let rows = vec![SweepRow {
            value: 0.00125,
            summary: Summary {
                average_jaccard: Some(0.5),
                sc_sp: Some(0.25),
                sc_mp: None,
                mc_mp: Some(1.0),
                ..Default::default()
            },
        }];
        assert_eq!(
            sweep_csv(SweepParam::Rho, &rows),
            "rho,sc_sp_aj,sc_mp_aj,mc_mp_aj,aj\n0.00125,0.25,,1,0.5\n"
        );
    }

    #[test]
    fn config_paths_resolve_against_base() {
        let mut cfg: PipelineConfig = serde_json::from_str(
            r#"{"videos":[{"frames_dir":"f","sources":{"a":"a.fpdt"},"ground_truth":"/abs/gt.fpdt"}],
                "policy":"policy.json","out_dir":"out"}"#,
        )
        .unwrap();
        cfg.resolve_paths(Path::new("/base"));
        assert_eq!(cfg.videos[0].frames_dir, PathBuf::from("/base/f"));
        assert_eq!(cfg.videos[0].sources["a"], PathBuf::from("/base/a.fpdt"));
        assert_eq!(cfg.videos[0].ground_truth, Some(PathBuf::from("/abs/gt.fpdt")));
        assert_eq!(cfg.policy, PolicySource::Path(PathBuf::from("/base/policy.json")));
        assert_eq!(cfg.video_names(), vec!["video000".to_string()]);
    }

    #[test]
    fn inline_policy_parses() {
        let cfg: PipelineConfig = serde_json::from_str(
            r#"{"videos":[],"policy":{"moving_camera_source":"a",
                "static_camera_static_source":"a","static_camera_moving_source":"b"}}"#,
        )
        .unwrap();
        assert!(matches!(cfg.policy, PolicySource::Inline(_)));
        assert!(cfg.validate().is_err());
    }
}
