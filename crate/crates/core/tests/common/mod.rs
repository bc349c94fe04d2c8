//! Shared test support: direct-definition oracles and synthetic suites.
//!
//! The oracles here deliberately re-derive each quantity from its textbook
//! definition, one window / one slot at a time, without touching the
//! library's kernels.

#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::Path;

use fpd_core::dtc::FusionPolicy;
use fpd_core::pipeline::{PipelineConfig, PolicySource, VideoConfig, VideoInputs};
use fpd_core::rng::SplitMix64;
use fpd_core::ssim::SsimConfig;
use fpd_core::synth::{
    degrade_tracks, degraded_file_name, generate_scene, write_synthetic, Blob, CameraMotion,
    DegradationSpec, SceneSpec, SynthSpec, FRAMES_DIR, GT_FILE, TRUTH_FILE,
};
use fpd_core::tracks::{QueryPoint, TrackSet};
use fpd_core::video_io::Frame;

/// SSIM by definition: for every window position, two-pass mean/variance/
/// covariance over the window, then the mean of the map.
pub fn naive_ssim(a: &Frame, b: &Frame, cfg: &SsimConfig) -> f64 {
    let w = a.width() as usize;
    let h = a.height() as usize;
    let win = cfg.window_size;
    let n = (win * win) as f64;
    let norm = if cfg.sample_covariance { n - 1.0 } else { n };
    let c1 = (cfg.k1 * cfg.data_range).powi(2);
    let c2 = (cfg.k2 * cfg.data_range).powi(2);
    let pa = a.pixels();
    let pb = b.pixels();
    let mut total = 0.0;
    let mut count = 0usize;
    for oy in 0..=h - win {
        for ox in 0..=w - win {
            let mut xs = Vec::with_capacity(win * win);
            let mut ys = Vec::with_capacity(win * win);
            for dy in 0..win {
                for dx in 0..win {
                    let i = (oy + dy) * w + ox + dx;
                    xs.push(pa[i] as f64);
                    ys.push(pb[i] as f64);
                }
            }
            let mx = xs.iter().sum::<f64>() / n;
            let my = ys.iter().sum::<f64>() / n;
            let vx = xs.iter().map(|x| (x - mx).powi(2)).sum::<f64>() / norm;
            let vy = ys.iter().map(|y| (y - my).powi(2)).sum::<f64>() / norm;
            let cxy = xs
                .iter()
                .zip(&ys)
                .map(|(x, y)| (x - mx) * (y - my))
                .sum::<f64>()
                / norm;
            total += ((2.0 * mx * my + c1) * (2.0 * cxy + c2))
                / ((mx * mx + my * my + c1) * (vx + vy + c2));
            count += 1;
        }
    }
    total / count as f64
}

/// (tp, fp, fn) per threshold by enumerating every (point, frame, threshold).
pub fn naive_counts(
    pred: &TrackSet,
    gt: &TrackSet,
    thresholds: &[f64],
    eval_w: f64,
    eval_h: f64,
    exclude_query: bool,
) -> Vec<(u64, u64, u64)> {
    thresholds
        .iter()
        .map(|&delta| {
            let (mut tp, mut fp, mut fn_) = (0, 0, 0);
            for i in 0..gt.num_points() {
                for t in 0..gt.num_frames() {
                    if exclude_query && t == gt.queries()[i].frame {
                        continue;
                    }
                    let p = pred.point_xy(i)[t];
                    let g = gt.point_xy(i)[t];
                    let pv = pred.point_visibility(i)[t];
                    let gv = gt.point_visibility(i)[t];
                    let dx = (p[0] as f64 - g[0] as f64) * eval_w;
                    let dy = (p[1] as f64 - g[1] as f64) * eval_h;
                    let close = (dx * dx + dy * dy).sqrt() <= delta;
                    if pv && gv && close {
                        tp += 1;
                    }
                    if pv && (!gv || !close) {
                        fp += 1;
                    }
                    if gv && (!pv || !close) {
                        fn_ += 1;
                    }
                }
            }
            (tp, fp, fn_)
        })
        .collect()
}

pub fn random_frame(rng: &mut SplitMix64, w: u32, h: u32) -> Frame {
    let px = (0..w * h).map(|_| rng.next_f64() as f32).collect();
    Frame::gray(w, h, px).unwrap()
}

/// Random ground truth and a prediction scattered 0..24 px around it (in
/// 256x256 metric space), with independent random visibilities.
pub fn random_pair(rng: &mut SplitMix64, m: usize, t: usize) -> (TrackSet, TrackSet) {
    let mut gcoords = Vec::new();
    let mut pcoords = Vec::new();
    let mut gvis = Vec::new();
    let mut pvis = Vec::new();
    let mut queries = Vec::new();
    for _ in 0..m {
        let e = (rng.next_u64() % t as u64) as usize;
        for f in 0..t {
            let g = [rng.next_f64() as f32, rng.next_f64() as f32];
            let r = rng.next_f64() * 24.0 / 256.0;
            let a = rng.next_f64() * std::f64::consts::TAU;
            gcoords.push(g);
            pcoords.push([
                (g[0] as f64 + r * a.cos()) as f32,
                (g[1] as f64 + r * a.sin()) as f32,
            ]);
            gvis.push(f == e || rng.next_f64() < 0.7);
            pvis.push(f == e || rng.next_f64() < 0.7);
        }
        let start = gcoords.len() - t;
        queries.push(QueryPoint {
            frame: e,
            x: gcoords[start + e][0],
            y: gcoords[start + e][1],
        });
    }
    let gt = TrackSet::new(256, 256, m, t, gcoords, gvis, queries.clone(), "gt").unwrap();
    let pred = TrackSet::new(256, 256, m, t, pcoords, pvis, queries, "pred").unwrap();
    (pred, gt)
}

pub const SIDE: u32 = 64;
pub const FRAMES: usize = 180;

fn base(seed: u64, camera: CameraMotion, num_frames: usize) -> SceneSpec {
    SceneSpec {
        width: SIDE,
        height: SIDE,
        num_frames,
        fps: 30.0,
        camera,
        texture_seed: seed,
        blobs: vec![],
        background_grid: [4, 4],
        occlusions: vec![],
    }
}

/// Fixed camera with two slowly moving blobs.
pub fn static_scene(seed: u64) -> SceneSpec {
    let mut rng = SplitMix64::new(seed ^ 0x5EED);
    let mut spec = base(seed, CameraMotion::Static, FRAMES);
    for k in 0..2 {
        let speed = 0.1 + 0.1 * rng.next_f64();
        let dir = if k == 0 { 1.0 } else { -1.0 };
        spec.blobs.push(Blob {
            start: [32.0 - dir * 16.0, 16.0 + 28.0 * k as f64 + 4.0 * rng.next_f64()],
            velocity: [dir * speed, 0.05 * (rng.next_f64() - 0.5)],
            radius: 4.0,
            intensity: 0.9,
        });
    }
    spec
}

/// Camera panning 2 px/frame in one of four directions, with one blob
/// drifting slowly relative to it.
pub fn pan_scene(seed: u64) -> SceneSpec {
    let dirs = [[2.0, 0.0], [-2.0, 0.0], [0.0, 2.0], [1.5, -1.5]];
    let [vx, vy] = dirs[(seed % 4) as usize];
    let mut spec = base(seed, CameraMotion::Pan { vx, vy }, FRAMES);
    spec.blobs.push(Blob {
        start: [30.0, 34.0],
        velocity: [vx + 0.1, vy + 0.1],
        radius: 5.0,
        intensity: 0.95,
    });
    spec
}

/// 20 s of 0.01 px/frame drift: large cumulative motion, negligible
/// motion inside any 5 s clip.
pub fn slow_drift_scene(seed: u64) -> SceneSpec {
    base(seed, CameraMotion::SlowDrift { vx: 0.01, vy: 0.0 }, 600)
}

pub const SOURCE_A: &str = "a";
pub const SOURCE_B: &str = "b";

/// A: near-exact on static points, drifting on moving points.
pub fn degradation_a(seed: u64) -> DegradationSpec {
    DegradationSpec {
        jitter_sigma: 0.0005,
        drift_rate: 0.002,
        visibility_flip_prob: 0.0,
        seed: seed.wrapping_mul(31).wrapping_add(1),
    }
}

/// B: jittery (about 1 px) on static points, exact on moving points.
pub fn degradation_b(seed: u64) -> DegradationSpec {
    DegradationSpec {
        jitter_sigma: 0.004,
        drift_rate: 0.0,
        visibility_flip_prob: 0.0,
        seed: seed.wrapping_mul(31).wrapping_add(2),
    }
}

/// Static points from A, moving points and moving cameras from B;
/// point detection on A.
pub fn ensemble_policy() -> FusionPolicy {
    FusionPolicy {
        moving_camera_source: SOURCE_B.into(),
        static_camera_static_source: SOURCE_A.into(),
        static_camera_moving_source: SOURCE_B.into(),
        mpd_reference_source: Some(SOURCE_A.into()),
        stabilize_static: false,
    }
}

pub fn scene_inputs(name: String, spec: &SceneSpec, seed: u64) -> VideoInputs {
    let scene = generate_scene(spec).unwrap();
    let flags = &scene.truth.static_points;
    let mut sources = BTreeMap::new();
    for (label, deg) in [(SOURCE_A, degradation_a(seed)), (SOURCE_B, degradation_b(seed))] {
        let mut ts = degrade_tracks(&scene.ground_truth, flags, &deg).unwrap();
        ts.set_source_name(label);
        sources.insert(label.to_string(), ts);
    }
    VideoInputs {
        name,
        video: scene.video,
        sources,
        ground_truth: Some(scene.ground_truth),
        truth: Some(scene.truth),
    }
}

/// `static_count` static-camera scenes followed by `pan_count` pan scenes.
pub fn benchmark(static_count: u64, pan_count: u64, seed: u64) -> Vec<VideoInputs> {
    let statics = (0..static_count).map(|i| {
        let s = seed + i;
        scene_inputs(format!("static{i:02}"), &static_scene(s), s)
    });
    let pans = (0..pan_count).map(|i| {
        let s = seed + 1000 + i;
        scene_inputs(format!("pan{i:02}"), &pan_scene(s), s)
    });
    statics.chain(pans).collect()
}

/// Writes each `(name, spec, seed)` scene with sources A and B under
/// `root/<name>/` and returns a config with relative paths, as a user
/// would write it next to the data.
pub fn write_suite(root: &Path, scenes: &[(String, SceneSpec, u64)], policy: FusionPolicy) -> PipelineConfig {
    let mut videos = Vec::new();
    for (name, spec, seed) in scenes {
        let synth = SynthSpec {
            scene: spec.clone(),
            degradations: [
                (SOURCE_A.to_string(), degradation_a(*seed)),
                (SOURCE_B.to_string(), degradation_b(*seed)),
            ]
            .into(),
        };
        write_synthetic(&synth, &root.join(name)).unwrap();
        let rel = Path::new(name);
        videos.push(VideoConfig {
            name: Some(name.clone()),
            frames_dir: rel.join(FRAMES_DIR),
            manifest: None,
            sources: [SOURCE_A, SOURCE_B]
                .iter()
                .map(|l| (l.to_string(), rel.join(degraded_file_name(l))))
                .collect(),
            ground_truth: Some(rel.join(GT_FILE)),
            truth: Some(rel.join(TRUTH_FILE)),
        });
    }
    PipelineConfig {
        videos,
        policy: PolicySource::Inline(policy),
        mcmd: Default::default(),
        mpd: Default::default(),
        metrics: Default::default(),
        out_dir: None,
    }
}
