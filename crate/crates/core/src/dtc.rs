//! Dynamic trajectory correction: per-point selection of trajectories from
//! several named track sources, driven by the camera verdict and the
//! per-point static/moving flags.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mcmd::CameraMotionResult;
use crate::mpd::{detect_static_points, MpdConfig, PointMotionFlags};
use crate::tracks::TrackSet;

/// Which source supplies each kind of point.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FusionPolicy {
    /// Every point of a moving-camera video.
    pub moving_camera_source: String,
    /// Static points of a static-camera video.
    pub static_camera_static_source: String,
    /// Moving points of a static-camera video.
    pub static_camera_moving_source: String,
    /// Tracks fed to moving point detection. Defaults to
    /// `static_camera_static_source`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mpd_reference_source: Option<String>,
    /// Replace static points' coordinates by their median position.
    #[serde(default)]
    pub stabilize_static: bool,
}

impl FusionPolicy {
    /// Policy that takes everything from a single source.
    pub fn single(label: &str) -> Self {
        Self {
            moving_camera_source: label.to_owned(),
            static_camera_static_source: label.to_owned(),
            static_camera_moving_source: label.to_owned(),
            mpd_reference_source: None,
            stabilize_static: false,
        }
    }

    pub fn mpd_source(&self) -> &str {
        self.mpd_reference_source
            .as_deref()
            .unwrap_or(&self.static_camera_static_source)
    }

    fn labels(&self) -> [&str; 4] {
        [
            &self.moving_camera_source,
            &self.static_camera_static_source,
            &self.static_camera_moving_source,
            self.mpd_source(),
        ]
    }

    pub fn describe(&self) -> String {
        format!(
            "fpd[moving_camera={},static_point={},moving_point={},mpd={}{}]",
            self.moving_camera_source,
            self.static_camera_static_source,
            self.static_camera_moving_source,
            self.mpd_source(),
            if self.stabilize_static { ",stabilized" } else { "" }
        )
    }
}

#[derive(Debug, Clone)]
pub struct FusionOutput {
    pub tracks: TrackSet,
    /// `None` when the camera was moving and point detection was skipped.
    pub point_flags: Option<PointMotionFlags>,
    /// Source label each output point was copied from.
    pub selected: Vec<String>,
}

fn check_sources<'a>(
    sources: &'a BTreeMap<String, TrackSet>,
    policy: &FusionPolicy,
) -> Result<&'a TrackSet> {
    for label in policy.labels() {
        if !sources.contains_key(label) {
            return Err(Error::MissingSource(label.to_owned()));
        }
    }
    let mut iter = sources.values();
    let first = iter
        .next()
        .ok_or_else(|| Error::Config("no track sources given".into()))?;
    for other in iter {
        first.ensure_compatible(other)?;
    }
    Ok(first)
}

/// Per-point median of the visible coordinates written to every frame.
/// With no visible frames the track is returned unchanged.
pub fn stabilize_static_track(xy: &[[f32; 2]], visible: &[bool]) -> Vec<[f32; 2]> {
    let mut xs: Vec<f32> = Vec::new();
    let mut ys: Vec<f32> = Vec::new();
    for (p, _) in xy.iter().zip(visible).filter(|(_, &v)| v) {
        xs.push(p[0]);
        ys.push(p[1]);
    }
    if xs.is_empty() {
        return xy.to_vec();
    }
    let center = [median(&mut xs), median(&mut ys)];
    vec![center; xy.len()]
}

fn median(values: &mut [f32]) -> f32 {
    values.sort_by(f32::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        ((values[n / 2 - 1] as f64 + values[n / 2] as f64) / 2.0) as f32
    }
}

/// Fuses the sources according to the camera verdict and policy.
///
/// Moving camera: the whole `moving_camera_source` set is copied. Static
/// camera: points are classified on `mpd_reference_source`; static points
/// come from `static_camera_static_source`, moving ones from
/// `static_camera_moving_source`. Visibility always travels with the
/// selected trajectory.
pub fn fuse(
    sources: &BTreeMap<String, TrackSet>,
    camera: &CameraMotionResult,
    policy: &FusionPolicy,
    mpd_cfg: &MpdConfig,
) -> Result<FusionOutput> {
    let template = check_sources(sources, policy)?;
    let (m, t) = (template.num_points(), template.num_frames());

    if camera.moving {
        let mut tracks = sources[&policy.moving_camera_source].clone();
        tracks.set_source_name(policy.describe());
        return Ok(FusionOutput {
            tracks,
            point_flags: None,
            selected: vec![policy.moving_camera_source.clone(); m],
        });
    }

    let flags = detect_static_points(&sources[policy.mpd_source()], mpd_cfg)?;
    let mut coords = Vec::with_capacity(m * t);
    let mut visibility = Vec::with_capacity(m * t);
    let mut selected = Vec::with_capacity(m);
    for i in 0..m {
        let is_static = flags.is_static(i);
        let label = if is_static {
            &policy.static_camera_static_source
        } else {
            &policy.static_camera_moving_source
        };
        let src = &sources[label];
        let vis = src.point_visibility(i);
        if is_static && policy.stabilize_static {
            coords.extend(stabilize_static_track(src.point_xy(i), vis));
        } else {
            coords.extend_from_slice(src.point_xy(i));
        }
        visibility.extend_from_slice(vis);
        selected.push(label.clone());
    }
    let tracks = TrackSet::new(
        template.width(),
        template.height(),
        m,
        t,
        coords,
        visibility,
        template.queries().to_vec(),
        policy.describe(),
    )?;
    Ok(FusionOutput {
        tracks,
        point_flags: Some(flags),
        selected,
    })
}
