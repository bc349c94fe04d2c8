//! Synthetic scenes with known camera motion and ground-truth tracks, plus
//! seeded degradations that mimic tracker failure modes: jitter on static
//! points and cumulative drift on moving ones.
//!
//! The background is a wrap-around texture (seeded uniform noise, 5x5 box
//! blur, contrast gain) sampled bilinearly at the camera offset, so a pan
//! keeps global image statistics constant. Blobs are flat discs that move
//! with constant scene velocity. Pixel values are quantized to 8 bits so a
//! rendered video survives a PNG round trip unchanged.
//!
//! Track order: one point per blob (its center), then the background grid
//! row by row. Background points that are never visible are dropped.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::SplitMix64;
use crate::tracks::{save_tracks, QueryPoint, TrackFormat, TrackSet};
use crate::video_io::{save_frame_sequence, Frame, VideoSequence};

const BLUR_RADIUS: isize = 2;
const TEXTURE_GAIN: f64 = 4.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CameraMotion {
    Static,
    /// Constant translation in pixels per frame.
    Pan { vx: f64, vy: f64 },
    /// Same kinematics as a pan; used for sub-pixel velocities.
    SlowDrift { vx: f64, vy: f64 },
}

impl CameraMotion {
    fn velocity(&self) -> [f64; 2] {
        match *self {
            CameraMotion::Static => [0.0, 0.0],
            CameraMotion::Pan { vx, vy } | CameraMotion::SlowDrift { vx, vy } => [vx, vy],
        }
    }

    pub fn is_static(&self) -> bool {
        self.velocity() == [0.0, 0.0]
    }
}

fn default_intensity() -> f64 {
    0.9
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Blob {
    /// Image position of the center at frame 0, in pixels.
    pub start: [f64; 2],
    /// Scene velocity in pixels per frame.
    pub velocity: [f64; 2],
    pub radius: f64,
    #[serde(default = "default_intensity")]
    pub intensity: f64,
}

/// Marks `point` occluded on frames `[start, end)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Occlusion {
    pub point: usize,
    pub start: usize,
    pub end: usize,
}

fn default_grid() -> [usize; 2] {
    [4, 4]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub width: u32,
    pub height: u32,
    pub num_frames: usize,
    pub fps: f64,
    pub camera: CameraMotion,
    pub texture_seed: u64,
    #[serde(default)]
    pub blobs: Vec<Blob>,
    /// Background grid as `[columns, rows]`.
    #[serde(default = "default_grid")]
    pub background_grid: [usize; 2],
    #[serde(default)]
    pub occlusions: Vec<Occlusion>,
}

impl SceneSpec {
    pub fn validate(&self) -> Result<()> {
        if self.width < 32 || self.height < 32 {
            return Err(Error::Config(format!(
                "scene must be at least 32x32, got {}x{}",
                self.width, self.height
            )));
        }
        if self.num_frames < 2 {
            return Err(Error::Config("scene needs at least 2 frames".into()));
        }
        if !(self.fps.is_finite() && self.fps > 0.0) {
            return Err(Error::Config(format!("fps must be positive, got {}", self.fps)));
        }
        let [vx, vy] = self.camera.velocity();
        if !(vx.is_finite() && vy.is_finite()) {
            return Err(Error::Config("camera velocity must be finite".into()));
        }
        for (i, b) in self.blobs.iter().enumerate() {
            let finite = b.start.iter().chain(&b.velocity).all(|v| v.is_finite());
            if !finite || b.radius.is_nan() || b.radius <= 0.0 || !(0.0..=1.0).contains(&b.intensity) {
                return Err(Error::Config(format!("blob {i} is invalid: {b:?}")));
            }
        }
        Ok(())
    }

    fn camera_offset(&self, t: usize) -> [f64; 2] {
        let [vx, vy] = self.camera.velocity();
        [vx * t as f64, vy * t as f64]
    }

    fn blob_center(&self, b: &Blob, t: usize) -> [f64; 2] {
        let c = self.camera_offset(t);
        [
            b.start[0] + b.velocity[0] * t as f64 - c[0],
            b.start[1] + b.velocity[1] * t as f64 - c[1],
        ]
    }

    fn in_frame(&self, p: [f64; 2]) -> bool {
        p[0] >= 0.0 && p[1] >= 0.0 && p[0] < self.width as f64 && p[1] < self.height as f64
    }

    fn occluded(&self, point: usize, t: usize) -> bool {
        self.occlusions
            .iter()
            .any(|o| o.point == point && (o.start..o.end).contains(&t))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DegradationSpec {
    /// Std of per-frame Gaussian noise on static points (normalized units).
    pub jitter_sigma: f64,
    /// Per-frame drift added cumulatively to moving points (normalized units).
    pub drift_rate: f64,
    pub visibility_flip_prob: f64,
    pub seed: u64,
}

impl Default for DegradationSpec {
    fn default() -> Self {
        Self {
            jitter_sigma: 0.0,
            drift_rate: 0.0,
            visibility_flip_prob: 0.0,
            seed: 0,
        }
    }
}

impl DegradationSpec {
    pub fn validate(&self) -> Result<()> {
        let ok = self.jitter_sigma.is_finite()
            && self.jitter_sigma >= 0.0
            && self.drift_rate.is_finite()
            && self.drift_rate >= 0.0
            && (0.0..=1.0).contains(&self.visibility_flip_prob);
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid degradation {self:?}")))
        }
    }
}

/// True labels of a synthetic scene.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SceneTruth {
    pub camera_moving: bool,
    /// Per output point: is its image position constant? (A blob moving
    /// with the camera counts as static.)
    pub static_points: Vec<bool>,
}

#[derive(Debug, Clone)]
pub struct SyntheticScene {
    pub video: VideoSequence,
    pub ground_truth: TrackSet,
    pub truth: SceneTruth,
}

fn render_texture(width: usize, height: usize, seed: u64) -> Vec<f64> {
    let mut rng = SplitMix64::new(seed);
    let noise: Vec<f64> = (0..width * height).map(|_| rng.next_f64()).collect();
    let (w, h) = (width as isize, height as isize);
    let area = ((2 * BLUR_RADIUS + 1) * (2 * BLUR_RADIUS + 1)) as f64;
    let mut out = vec![0.0; width * height];
    for y in 0..h {
        for x in 0..w {
            let mut sum = 0.0;
            for dy in -BLUR_RADIUS..=BLUR_RADIUS {
                let yy = (y + dy).rem_euclid(h);
                for dx in -BLUR_RADIUS..=BLUR_RADIUS {
                    let xx = (x + dx).rem_euclid(w);
                    sum += noise[(yy * w + xx) as usize];
                }
            }
            let v = 0.5 + (sum / area - 0.5) * TEXTURE_GAIN;
            out[(y * w + x) as usize] = v.clamp(0.0, 1.0);
        }
    }
    out
}

fn sample_wrapped(tex: &[f64], width: usize, height: usize, x: f64, y: f64) -> f64 {
    let (w, h) = (width as f64, height as f64);
    let x = x.rem_euclid(w);
    let y = y.rem_euclid(h);
    let (x0, y0) = (x.floor(), y.floor());
    let (fx, fy) = (x - x0, y - y0);
    let x0 = x0 as usize % width;
    let y0 = y0 as usize % height;
    let x1 = (x0 + 1) % width;
    let y1 = (y0 + 1) % height;
    let at = |xx: usize, yy: usize| tex[yy * width + xx];
    let top = at(x0, y0) * (1.0 - fx) + at(x1, y0) * fx;
    let bottom = at(x0, y1) * (1.0 - fx) + at(x1, y1) * fx;
    top * (1.0 - fy) + bottom * fy
}

fn quantize(v: f64) -> f32 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8 as f32 / 255.0
}

fn render_frame(spec: &SceneSpec, tex: &[f64], t: usize) -> Result<Frame> {
    let (w, h) = (spec.width as usize, spec.height as usize);
    let [cx, cy] = spec.camera_offset(t);
    let centers: Vec<[f64; 2]> = spec.blobs.iter().map(|b| spec.blob_center(b, t)).collect();
    let mut pixels = Vec::with_capacity(w * h);
    for y in 0..h {
        for x in 0..w {
            let mut v = sample_wrapped(tex, w, h, x as f64 + cx, y as f64 + cy);
            for (b, c) in spec.blobs.iter().zip(&centers) {
                let (dx, dy) = (x as f64 - c[0], y as f64 - c[1]);
                if dx * dx + dy * dy <= b.radius * b.radius {
                    v = b.intensity;
                }
            }
            pixels.push(quantize(v));
        }
    }
    Frame::gray(spec.width, spec.height, pixels)
}

struct RawTrack {
    xy: Vec<[f64; 2]>,
    visible: Vec<bool>,
    is_static: bool,
}

fn covered_by_blob(spec: &SceneSpec, p: [f64; 2], t: usize) -> bool {
    spec.blobs.iter().any(|b| {
        let c = spec.blob_center(b, t);
        let (dx, dy) = (p[0] - c[0], p[1] - c[1]);
        dx * dx + dy * dy <= b.radius * b.radius
    })
}

pub fn generate_scene(spec: &SceneSpec) -> Result<SyntheticScene> {
    spec.validate()?;
    let (w, h) = (spec.width as usize, spec.height as usize);
    let tex = render_texture(w, h, spec.texture_seed);
    let frames = (0..spec.num_frames)
        .into_par_iter()
        .map(|t| render_frame(spec, &tex, t))
        .collect::<Result<Vec<_>>>()?;
    let video = VideoSequence::new(frames, spec.fps)?;

    let camera_moving = !spec.camera.is_static();
    let mut raw: Vec<(usize, RawTrack)> = Vec::new();

    for (i, b) in spec.blobs.iter().enumerate() {
        let xy: Vec<[f64; 2]> = (0..spec.num_frames).map(|t| spec.blob_center(b, t)).collect();
        let mut visible = Vec::with_capacity(spec.num_frames);
        for (t, p) in xy.iter().enumerate() {
            let occluded = spec.occluded(i, t);
            if !spec.in_frame(*p) && !occluded {
                return Err(Error::Config(format!(
                    "blob {i} leaves the frame at frame {t} without a declared occlusion"
                )));
            }
            visible.push(!occluded);
        }
        let is_static = b.velocity == spec.camera.velocity();
        raw.push((i, RawTrack { xy, visible, is_static }));
    }

    let [cols, rows] = spec.background_grid;
    for r in 0..rows {
        for c in 0..cols {
            let index = spec.blobs.len() + r * cols + c;
            let scene = [
                (c as f64 + 0.5) / cols as f64 * w as f64,
                (r as f64 + 0.5) / rows as f64 * h as f64,
            ];
            let xy: Vec<[f64; 2]> = (0..spec.num_frames)
                .map(|t| {
                    let o = spec.camera_offset(t);
                    [scene[0] - o[0], scene[1] - o[1]]
                })
                .collect();
            let visible = xy
                .iter()
                .enumerate()
                .map(|(t, &p)| {
                    spec.in_frame(p) && !covered_by_blob(spec, p, t) && !spec.occluded(index, t)
                })
                .collect();
            raw.push((
                index,
                RawTrack {
                    xy,
                    visible,
                    is_static: !camera_moving,
                },
            ));
        }
    }

    let t_len = spec.num_frames;
    let mut coords = Vec::new();
    let mut visibility = Vec::new();
    let mut queries = Vec::new();
    let mut static_points = Vec::new();
    for (index, track) in raw {
        let Some(e) = track.visible.iter().position(|&v| v) else {
            if index < spec.blobs.len() {
                return Err(Error::Config(format!("blob {index} is never visible")));
            }
            log::debug!("background point {index} never visible; dropped");
            continue;
        };
        let norm = |p: [f64; 2]| [(p[0] / w as f64) as f32, (p[1] / h as f64) as f32];
        let q = norm(track.xy[e]);
        queries.push(QueryPoint {
            frame: e,
            x: q[0],
            y: q[1],
        });
        coords.extend(track.xy.iter().map(|&p| norm(p)));
        visibility.extend(track.visible);
        static_points.push(track.is_static);
    }
    let m = queries.len();
    let ground_truth = TrackSet::new(
        spec.width,
        spec.height,
        m,
        t_len,
        coords,
        visibility,
        queries,
        "gt",
    )?;
    Ok(SyntheticScene {
        video,
        ground_truth,
        truth: SceneTruth {
            camera_moving,
            static_points,
        },
    })
}

/// Cumulative drift magnitude per frame: zero at the query frame, growing
/// by `rate` per frame in both temporal directions.
pub fn drift_offsets(num_frames: usize, query_frame: usize, rate: f64) -> Vec<f64> {
    let mut out = vec![0.0; num_frames];
    for t in query_frame + 1..num_frames {
        out[t] = out[t - 1] + rate;
    }
    for t in (0..query_frame).rev() {
        out[t] = out[t + 1] + rate;
    }
    out
}

/// Applies seeded jitter (static points), drift (moving points) and
/// visibility flips (never at the query frame).
pub fn degrade_tracks(gt: &TrackSet, static_flags: &[bool], spec: &DegradationSpec) -> Result<TrackSet> {
    spec.validate()?;
    if static_flags.len() != gt.num_points() {
        return Err(Error::ShapeMismatch(format!(
            "{} static flags for {} points",
            static_flags.len(),
            gt.num_points()
        )));
    }
    let t_len = gt.num_frames();
    let mut rng = SplitMix64::new(spec.seed);
    let mut coords = Vec::with_capacity(gt.coords().len());
    let mut visibility = Vec::with_capacity(gt.visibility().len());
    for (i, &is_static) in static_flags.iter().enumerate() {
        let query = gt.queries()[i].frame;
        let mut xy: Vec<[f32; 2]> = gt.point_xy(i).to_vec();
        if is_static && spec.jitter_sigma > 0.0 {
            for p in xy.iter_mut() {
                let nx = spec.jitter_sigma * rng.next_gaussian();
                let ny = spec.jitter_sigma * rng.next_gaussian();
                *p = [(p[0] as f64 + nx) as f32, (p[1] as f64 + ny) as f32];
            }
        } else if !is_static && spec.drift_rate > 0.0 {
            let (s, c) = (std::f64::consts::TAU * rng.next_f64()).sin_cos();
            for (p, off) in xy.iter_mut().zip(drift_offsets(t_len, query, spec.drift_rate)) {
                *p = [(p[0] as f64 + c * off) as f32, (p[1] as f64 + s * off) as f32];
            }
        }
        let mut vis = gt.point_visibility(i).to_vec();
        if spec.visibility_flip_prob > 0.0 {
            for (t, v) in vis.iter_mut().enumerate() {
                let flip = rng.next_f64() < spec.visibility_flip_prob;
                if flip && t != query {
                    *v = !*v;
                }
            }
        }
        coords.extend(xy);
        visibility.extend(vis);
    }
    TrackSet::new(
        gt.width(),
        gt.height(),
        gt.num_points(),
        t_len,
        coords,
        visibility,
        gt.queries().to_vec(),
        gt.source_name(),
    )
}

/// Scene plus named degradations, as read by `fpd synth`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub scene: SceneSpec,
    #[serde(default)]
    pub degradations: BTreeMap<String, DegradationSpec>,
}

pub const FRAMES_DIR: &str = "frames";
pub const GT_FILE: &str = "gt.fpdt";
pub const TRUTH_FILE: &str = "truth.json";

pub fn degraded_file_name(label: &str) -> String {
    format!("degraded_{label}.fpdt")
}

/// Writes `frames/` (PNGs + manifest), `gt.fpdt`, `truth.json` and one
/// `degraded_<label>.fpdt` per degradation into `out_dir`.
pub fn write_synthetic(spec: &SynthSpec, out_dir: &Path) -> Result<SyntheticScene> {
    let scene = generate_scene(&spec.scene)?;
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    save_frame_sequence(&scene.video, &out_dir.join(FRAMES_DIR))?;
    save_tracks(&scene.ground_truth, &out_dir.join(GT_FILE), TrackFormat::Binary)?;
    let truth_path = out_dir.join(TRUTH_FILE);
    let text =
        serde_json::to_string_pretty(&scene.truth).map_err(|e| Error::json(&truth_path, e))?;
    fs::write(&truth_path, text).map_err(|e| Error::io(&truth_path, e))?;
    for (label, deg) in &spec.degradations {
        let mut tracks = degrade_tracks(&scene.ground_truth, &scene.truth.static_points, deg)?;
        tracks.set_source_name(label.clone());
        let path = out_dir.join(degraded_file_name(label));
        save_tracks(&tracks, &path, TrackFormat::Binary)?;
    }
    Ok(scene)
}

pub fn read_truth(path: &Path) -> Result<SceneTruth> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::json(path, e))
}
