mod common;

use common::{pan_scene, static_scene};
use fpd_core::mpd::{detect_static_points, point_deviation, MpdConfig};
use fpd_core::synth::{
    degrade_tracks, drift_offsets, generate_scene, CameraMotion, DegradationSpec, SceneSpec,
};
use fpd_core::tracks::{encode_binary, QueryPoint, TrackSet};
use fpd_core::video_io::Frame;

fn constant_track(t: usize, query: usize) -> TrackSet {
    TrackSet::new(
        256,
        256,
        1,
        t,
        vec![[0.5, 0.5]; t],
        vec![true; t],
        vec![QueryPoint { frame: query, x: 0.5, y: 0.5 }],
        "gt",
    )
    .unwrap()
}

#[test]
fn jitter_has_requested_spread() {
    let gt = constant_track(1000, 0);
    let spec = DegradationSpec {
        jitter_sigma: 0.002,
        seed: 17,
        ..Default::default()
    };
    let out = degrade_tracks(&gt, &[true], &spec).unwrap();
    let (sx, sy, n) = point_deviation(out.point_xy(0), out.point_visibility(0));
    assert_eq!(n, 1000);
    for s in [sx, sy] {
        assert!((0.0017..=0.0023).contains(&s), "{s}");
    }
}

#[test]
fn drift_reaches_a_tenth_after_a_hundred_steps() {
    let offsets = drift_offsets(101, 0, 0.001);
    assert!((offsets[100] - 0.1).abs() < 1e-9);

    let gt = constant_track(101, 0);
    let spec = DegradationSpec {
        drift_rate: 0.001,
        seed: 3,
        ..Default::default()
    };
    let out = degrade_tracks(&gt, &[false], &spec).unwrap();
    let (a, b) = (out.point_xy(0)[0], out.point_xy(0)[100]);
    let d = ((b[0] as f64 - a[0] as f64).powi(2) + (b[1] as f64 - a[1] as f64).powi(2)).sqrt();
    // coordinates are stored as f32
    assert!((d - 0.1).abs() < 1e-6, "{d}");
}

#[test]
fn drift_grows_away_from_query_frame() {
    let off = drift_offsets(7, 3, 0.5);
    assert_eq!(off, vec![1.5, 1.0, 0.5, 0.0, 0.5, 1.0, 1.5]);
}

#[test]
fn degradation_is_seeded() {
    let scene = generate_scene(&static_scene(1)).unwrap();
    let flags = &scene.truth.static_points;
    let spec = DegradationSpec {
        jitter_sigma: 0.001,
        drift_rate: 0.001,
        visibility_flip_prob: 0.1,
        seed: 99,
    };
    let a = degrade_tracks(&scene.ground_truth, flags, &spec).unwrap();
    let b = degrade_tracks(&scene.ground_truth, flags, &spec).unwrap();
    assert_eq!(encode_binary(&a), encode_binary(&b));
    let c = degrade_tracks(&scene.ground_truth, flags, &DegradationSpec { seed: 100, ..spec }).unwrap();
    assert_ne!(encode_binary(&a), encode_binary(&c));
}

#[test]
fn flips_spare_query_frames() {
    let scene = generate_scene(&static_scene(2)).unwrap();
    let spec = DegradationSpec {
        visibility_flip_prob: 1.0,
        seed: 5,
        ..Default::default()
    };
    let gt = &scene.ground_truth;
    let out = degrade_tracks(gt, &scene.truth.static_points, &spec).unwrap();
    for i in 0..gt.num_points() {
        let e = gt.queries()[i].frame;
        for t in 0..gt.num_frames() {
            let (g, o) = (gt.point_visibility(i)[t], out.point_visibility(i)[t]);
            if t == e {
                assert!(o);
            } else {
                assert_eq!(o, !g);
            }
        }
    }
}

#[test]
fn zero_degradation_is_identity() {
    let scene = generate_scene(&pan_scene(3)).unwrap();
    let out = degrade_tracks(&scene.ground_truth, &scene.truth.static_points, &DegradationSpec::default())
        .unwrap();
    assert_eq!(encode_binary(&out), encode_binary(&scene.ground_truth));
}

#[test]
fn static_background_has_zero_deviation_for_any_rho() {
    let scene = generate_scene(&static_scene(4)).unwrap();
    let gt = &scene.ground_truth;
    let blobs = 2;
    for rho in [1e-12, 1e-6, 0.00125, 0.1] {
        let flags = detect_static_points(gt, &MpdConfig { rho, min_visible: 2 }).unwrap();
        for i in blobs..gt.num_points() {
            assert_eq!(flags.points[i].sigma_x, 0.0);
            assert_eq!(flags.points[i].sigma_y, 0.0);
            assert!(flags.is_static(i));
        }
    }
}

/// Integer horizontal shift `s` maximizing the correlation of `b(x)` with
/// `a(x + s)` under wraparound.
fn best_shift(a: &Frame, b: &Frame, max: i64) -> i64 {
    let (w, h) = (a.width() as i64, a.height() as i64);
    let (pa, pb) = (a.pixels(), b.pixels());
    let mean = |p: &[f32]| p.iter().map(|&v| v as f64).sum::<f64>() / p.len() as f64;
    let (ma, mb) = (mean(pa), mean(pb));
    (-max..=max)
        .map(|s| {
            let mut c = 0.0;
            for y in 0..h {
                for x in 0..w {
                    let xa = (x + s).rem_euclid(w);
                    c += (pa[(y * w + xa) as usize] as f64 - ma) * (pb[(y * w + x) as usize] as f64 - mb);
                }
            }
            (s, c)
        })
        .max_by(|l, r| l.1.total_cmp(&r.1))
        .unwrap()
        .0
}

#[test]
fn pan_moves_content_and_tracks_consistently() {
    let spec = SceneSpec {
        width: 64,
        height: 48,
        num_frames: 12,
        fps: 30.0,
        camera: CameraMotion::Pan { vx: 2.0, vy: 0.0 },
        texture_seed: 8,
        blobs: vec![],
        background_grid: [2, 2],
        occlusions: vec![],
    };
    let scene = generate_scene(&spec).unwrap();
    let frames = scene.video.frames();
    for t in 1..frames.len() {
        assert_eq!(best_shift(&frames[t - 1], &frames[t], 5), 2);
    }
    let gt = &scene.ground_truth;
    for i in 0..gt.num_points() {
        let xy = gt.point_xy(i);
        for t in 1..xy.len() {
            assert!((xy[t - 1][0] - xy[t][0] - 2.0 / 64.0).abs() < 1e-6);
            assert_eq!(xy[t - 1][1], xy[t][1]);
        }
    }
}

#[test]
fn truth_labels_follow_image_motion() {
    let s = generate_scene(&static_scene(6)).unwrap();
    assert!(!s.truth.camera_moving);
    assert_eq!(&s.truth.static_points[..2], &[false, false]);
    assert!(s.truth.static_points[2..].iter().all(|&f| f));

    let p = generate_scene(&pan_scene(6)).unwrap();
    assert!(p.truth.camera_moving);
    assert!(p.truth.static_points.iter().all(|&f| !f));
}
