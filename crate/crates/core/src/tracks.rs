//! Point trajectories with per-frame visibility, and their two file formats.
//!
//! Coordinates are held normalized to `[0, 1]` of the frame size; files may
//! store either normalized or pixel coordinates.
//!
//! Binary layout (little-endian):
//!
//! ```text
//! header  b"FPDT", version u32 = 1, M u32, T u32, width u32, height u32,
//!         flags u32 (bit 0: coordinates normalized), reserved u32
//! coords  f32 [point][frame][x, y]
//! vis     u8  [point][frame]           (0 or 1)
//! queries M x (frame u32, x f32, y f32)
//! ```
//!
//! JSON layout:
//!
//! ```text
//! {"width":W,"height":H,"normalized":bool,
//!  "points":[{"query":{"frame":e,"x":..,"y":..},"xy":[[x,y],..],"visible":[..]},..]}
//! ```

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MAGIC: [u8; 4] = *b"FPDT";
pub const VERSION: u32 = 1;
pub const HEADER_LEN: usize = 32;
const FLAG_NORMALIZED: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QueryPoint {
    pub frame: usize,
    pub x: f32,
    pub y: f32,
}

/// `M` trajectories over `T` frames.
///
/// Equality compares the track data and geometry; `source_name` is a label
/// and does not take part.
#[derive(Debug, Clone)]
pub struct TrackSet {
    width: u32,
    height: u32,
    num_points: usize,
    num_frames: usize,
    coords: Vec<[f32; 2]>,
    visibility: Vec<bool>,
    queries: Vec<QueryPoint>,
    source_name: String,
}

impl PartialEq for TrackSet {
    fn eq(&self, other: &Self) -> bool {
        self.width == other.width
            && self.height == other.height
            && self.num_points == other.num_points
            && self.num_frames == other.num_frames
            && self.queries == other.queries
            && self.visibility == other.visibility
            && self
                .coords
                .iter()
                .zip(&other.coords)
                .all(|(a, b)| a[0].to_bits() == b[0].to_bits() && a[1].to_bits() == b[1].to_bits())
    }
}

impl TrackSet {
    /// Builds a track set from normalized coordinates laid out
    /// `[point][frame]`. A point that is not visible at its own query frame
    /// is repaired (marked visible) with a warning.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        width: u32,
        height: u32,
        num_points: usize,
        num_frames: usize,
        coords: Vec<[f32; 2]>,
        mut visibility: Vec<bool>,
        queries: Vec<QueryPoint>,
        source_name: impl Into<String>,
    ) -> Result<Self> {
        let source_name = source_name.into();
        if width == 0 || height == 0 {
            return Err(Error::Format(format!("resolution {width}x{height}")));
        }
        if num_points == 0 || num_frames == 0 {
            return Err(Error::ShapeMismatch(format!(
                "track set needs at least one point and one frame, got {num_points}x{num_frames}"
            )));
        }
        let slots = num_points * num_frames;
        if coords.len() != slots || visibility.len() != slots || queries.len() != num_points {
            return Err(Error::ShapeMismatch(format!(
                "expected {slots} coords/visibility and {num_points} queries, got {}/{}/{}",
                coords.len(),
                visibility.len(),
                queries.len()
            )));
        }
        if let Some(pos) = coords
            .iter()
            .position(|c| !(c[0].is_finite() && c[1].is_finite()))
        {
            return Err(Error::Format(format!(
                "non-finite coordinate at point {} frame {}",
                pos / num_frames,
                pos % num_frames
            )));
        }
        for (i, q) in queries.iter().enumerate() {
            if q.frame >= num_frames {
                return Err(Error::Format(format!(
                    "query frame {} of point {i} outside {num_frames} frames",
                    q.frame
                )));
            }
            if !((0.0..=1.0).contains(&q.x) && (0.0..=1.0).contains(&q.y)) {
                return Err(Error::Format(format!(
                    "query of point {i} at ({}, {}) outside the unit square",
                    q.x, q.y
                )));
            }
            let slot = &mut visibility[i * num_frames + q.frame];
            if !*slot {
                log::warn!(
                    "{source_name}: point {i} not visible at its query frame {}; marking visible",
                    q.frame
                );
                *slot = true;
            }
        }
        Ok(Self {
            width,
            height,
            num_points,
            num_frames,
            coords,
            visibility,
            queries,
            source_name,
        })
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn num_points(&self) -> usize {
        self.num_points
    }

    pub fn num_frames(&self) -> usize {
        self.num_frames
    }

    pub fn coords(&self) -> &[[f32; 2]] {
        &self.coords
    }

    pub fn visibility(&self) -> &[bool] {
        &self.visibility
    }

    pub fn queries(&self) -> &[QueryPoint] {
        &self.queries
    }

    pub fn source_name(&self) -> &str {
        &self.source_name
    }

    pub fn set_source_name(&mut self, name: impl Into<String>) {
        self.source_name = name.into();
    }

    pub fn point_xy(&self, i: usize) -> &[[f32; 2]] {
        &self.coords[i * self.num_frames..(i + 1) * self.num_frames]
    }

    pub fn point_visibility(&self, i: usize) -> &[bool] {
        &self.visibility[i * self.num_frames..(i + 1) * self.num_frames]
    }

    /// True if `other` has the same shape, resolution and query points.
    pub fn is_compatible(&self, other: &TrackSet) -> bool {
        self.num_points == other.num_points
            && self.num_frames == other.num_frames
            && self.queries == other.queries
    }

    pub fn ensure_compatible(&self, other: &TrackSet) -> Result<()> {
        if self.is_compatible(other) {
            Ok(())
        } else {
            Err(Error::ShapeMismatch(format!(
                "`{}` ({}x{}) and `{}` ({}x{}) differ in shape or query points",
                self.source_name,
                self.num_points,
                self.num_frames,
                other.source_name,
                other.num_points,
                other.num_frames
            )))
        }
    }

    pub fn summary(&self) -> TrackSummary {
        let visible = self.visibility.iter().filter(|&&v| v).count();
        let per_point: Vec<usize> = (0..self.num_points)
            .map(|i| self.point_visibility(i).iter().filter(|&&v| v).count())
            .collect();
        TrackSummary {
            source_name: self.source_name.clone(),
            num_points: self.num_points,
            num_frames: self.num_frames,
            width: self.width,
            height: self.height,
            visible_slots: visible,
            visible_fraction: visible as f64 / self.visibility.len() as f64,
            min_visible_per_point: per_point.iter().copied().min().unwrap_or(0),
            max_visible_per_point: per_point.iter().copied().max().unwrap_or(0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackSummary {
    pub source_name: String,
    pub num_points: usize,
    pub num_frames: usize,
    pub width: u32,
    pub height: u32,
    pub visible_slots: usize,
    pub visible_fraction: f64,
    pub min_visible_per_point: usize,
    pub max_visible_per_point: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrackFormat {
    Json,
    Binary,
}

impl TrackFormat {
    /// `.json` selects JSON; anything else is binary.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("json") => TrackFormat::Json,
            _ => TrackFormat::Binary,
        }
    }
}

fn label_from_path(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default()
}

/// Reads a track file in either format (detected by the magic bytes).
/// The returned set's `source_name` is the file stem.
pub fn load_tracks(path: &Path) -> Result<TrackSet> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let label = label_from_path(path);
    if bytes.starts_with(&MAGIC) {
        decode_binary(&bytes, label)
    } else {
        let file: JsonTrackFile =
            serde_json::from_slice(&bytes).map_err(|e| Error::json(path, e))?;
        file.into_track_set(label)
    }
}

pub fn save_tracks(ts: &TrackSet, path: &Path, format: TrackFormat) -> Result<()> {
    let bytes = match format {
        TrackFormat::Binary => encode_binary(ts),
        TrackFormat::Json => {
            serde_json::to_vec(&JsonTrackFile::from(ts)).map_err(|e| Error::json(path, e))?
        }
    };
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn encode_binary(ts: &TrackSet) -> Vec<u8> {
    let slots = ts.coords.len();
    let mut out = Vec::with_capacity(HEADER_LEN + slots * 9 + ts.num_points * 12);
    out.extend_from_slice(&MAGIC);
    for word in [
        VERSION,
        ts.num_points as u32,
        ts.num_frames as u32,
        ts.width,
        ts.height,
        FLAG_NORMALIZED,
        0,
    ] {
        out.extend_from_slice(&word.to_le_bytes());
    }
    for c in &ts.coords {
        out.extend_from_slice(&c[0].to_le_bytes());
        out.extend_from_slice(&c[1].to_le_bytes());
    }
    out.extend(ts.visibility.iter().map(|&v| v as u8));
    for q in &ts.queries {
        out.extend_from_slice(&(q.frame as u32).to_le_bytes());
        out.extend_from_slice(&q.x.to_le_bytes());
        out.extend_from_slice(&q.y.to_le_bytes());
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn u32(&mut self) -> u32 {
        let v = u32::from_le_bytes(self.bytes[self.pos..self.pos + 4].try_into().unwrap());
        self.pos += 4;
        v
    }

    fn f32(&mut self) -> f32 {
        f32::from_bits(self.u32())
    }

    fn u8(&mut self) -> u8 {
        let v = self.bytes[self.pos];
        self.pos += 1;
        v
    }
}

fn to_normalized(v: f32, extent: u32, normalized: bool) -> f32 {
    if normalized {
        v
    } else {
        (v as f64 / extent as f64) as f32
    }
}

pub fn decode_binary(bytes: &[u8], source_name: impl Into<String>) -> Result<TrackSet> {
    if bytes.len() < HEADER_LEN {
        return Err(Error::Format(format!(
            "file of {} bytes is shorter than the {HEADER_LEN}-byte header",
            bytes.len()
        )));
    }
    if bytes[..4] != MAGIC {
        return Err(Error::Format("bad magic".into()));
    }
    let mut r = Reader { bytes, pos: 4 };
    let version = r.u32();
    if version != VERSION {
        return Err(Error::Format(format!("unsupported version {version}")));
    }
    let m = r.u32() as usize;
    let t = r.u32() as usize;
    let width = r.u32();
    let height = r.u32();
    let flags = r.u32();
    let _reserved = r.u32();
    let normalized = flags & FLAG_NORMALIZED != 0;

    let expected = m
        .checked_mul(t)
        .and_then(|slots| slots.checked_mul(9))
        .and_then(|n| n.checked_add(m.checked_mul(12)?))
        .and_then(|n| n.checked_add(HEADER_LEN));
    if expected != Some(bytes.len()) {
        return Err(Error::ShapeMismatch(format!(
            "header declares M={m}, T={t} but the file has {} bytes",
            bytes.len()
        )));
    }

    let slots = m * t;
    let mut coords = Vec::with_capacity(slots);
    for _ in 0..slots {
        let x = r.f32();
        let y = r.f32();
        coords.push([
            to_normalized(x, width, normalized),
            to_normalized(y, height, normalized),
        ]);
    }
    let mut visibility = Vec::with_capacity(slots);
    for _ in 0..slots {
        match r.u8() {
            0 => visibility.push(false),
            1 => visibility.push(true),
            other => return Err(Error::Format(format!("visibility byte {other}"))),
        }
    }
    let mut queries = Vec::with_capacity(m);
    for _ in 0..m {
        let frame = r.u32() as usize;
        let x = r.f32();
        let y = r.f32();
        queries.push(QueryPoint {
            frame,
            x: to_normalized(x, width, normalized),
            y: to_normalized(y, height, normalized),
        });
    }
    TrackSet::new(width, height, m, t, coords, visibility, queries, source_name)
}

#[derive(Debug, Serialize, Deserialize)]
struct JsonQuery {
    frame: usize,
    x: f32,
    y: f32,
}

#[derive(Debug, Serialize, Deserialize)]
struct JsonPoint {
    query: JsonQuery,
    xy: Vec<[f32; 2]>,
    visible: Vec<bool>,
}

#[derive(Debug, Serialize, Deserialize)]
struct JsonTrackFile {
    width: u32,
    height: u32,
    normalized: bool,
    points: Vec<JsonPoint>,
}

impl From<&TrackSet> for JsonTrackFile {
    fn from(ts: &TrackSet) -> Self {
        let points = (0..ts.num_points)
            .map(|i| {
                let q = ts.queries[i];
                JsonPoint {
                    query: JsonQuery {
                        frame: q.frame,
                        x: q.x,
                        y: q.y,
                    },
                    xy: ts.point_xy(i).to_vec(),
                    visible: ts.point_visibility(i).to_vec(),
                }
            })
            .collect();
        Self {
            width: ts.width,
            height: ts.height,
            normalized: true,
            points,
        }
    }
}

impl JsonTrackFile {
    fn into_track_set(self, label: String) -> Result<TrackSet> {
        let m = self.points.len();
        let t = self.points.first().map_or(0, |p| p.xy.len());
        let (w, h, norm) = (self.width, self.height, self.normalized);
        if w == 0 || h == 0 {
            return Err(Error::Format(format!("resolution {w}x{h}")));
        }
        let mut coords = Vec::with_capacity(m * t);
        let mut visibility = Vec::with_capacity(m * t);
        let mut queries = Vec::with_capacity(m);
        for (i, p) in self.points.into_iter().enumerate() {
            if p.xy.len() != t || p.visible.len() != t {
                return Err(Error::ShapeMismatch(format!(
                    "point {i} has {} coordinates and {} visibility flags, expected {t}",
                    p.xy.len(),
                    p.visible.len()
                )));
            }
            coords.extend(
                p.xy.iter()
                    .map(|c| [to_normalized(c[0], w, norm), to_normalized(c[1], h, norm)]),
            );
            visibility.extend(p.visible);
            queries.push(QueryPoint {
                frame: p.query.frame,
                x: to_normalized(p.query.x, w, norm),
                y: to_normalized(p.query.y, h, norm),
            });
        }
        TrackSet::new(w, h, m, t, coords, visibility, queries, label)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn single() -> TrackSet {
        TrackSet::new(
            256,
            256,
            1,
            1,
            vec![[0.25, 0.5]],
            vec![true],
            vec![QueryPoint {
                frame: 0,
                x: 0.25,
                y: 0.5,
            }],
            "one",
        )
        .unwrap()
    }

    #[test]
    fn binary_size_for_one_point_one_frame() {
        // header + two f32 coords + one visibility byte + one 12-byte query
        assert_eq!(encode_binary(&single()).len(), 32 + 8 + 1 + 12);
    }

    #[test]
    fn truncated_binary_is_shape_mismatch() {
        let mut bytes = encode_binary(&single());
        bytes[8..12].copy_from_slice(&100u32.to_le_bytes());
        bytes[12..16].copy_from_slice(&900u32.to_le_bytes());
        let err = decode_binary(&bytes, "x").unwrap_err();
        assert!(matches!(err, Error::ShapeMismatch(_)), "{err}");
        assert!(err.to_string().contains("shape mismatch"));
    }

    #[test]
    fn bad_magic_and_version() {
        let mut bytes = encode_binary(&single());
        bytes[4] = 7;
        assert!(matches!(decode_binary(&bytes, "x"), Err(Error::Format(_))));
        assert!(decode_binary(&bytes[..10], "x").is_err());
    }

    #[test]
    fn pixel_json_is_normalized() {
        let text = r#"{"width":256,"height":256,"normalized":false,"points":[
            {"query":{"frame":0,"x":128,"y":64},"xy":[[128,64],[129,64],[130,66]],"visible":[true,true,false]},
            {"query":{"frame":1,"x":0,"y":256},"xy":[[0,0],[0,256],[64,32]],"visible":[false,true,true]}]}"#;
        let file: JsonTrackFile = serde_json::from_str(text).unwrap();
        let ts = file.into_track_set("p".into()).unwrap();
        assert_eq!(ts.num_points(), 2);
        assert_eq!(ts.num_frames(), 3);
        assert_eq!(ts.point_xy(0)[2], [130.0 / 256.0, 66.0 / 256.0]);
        assert_eq!(ts.point_xy(1)[1], [0.0, 1.0]);
        assert_eq!(ts.queries()[0], QueryPoint { frame: 0, x: 0.5, y: 0.25 });
    }

    #[test]
    fn invisible_query_frame_is_repaired() {
        let ts = TrackSet::new(
            10,
            10,
            1,
            2,
            vec![[0.1, 0.1]; 2],
            vec![false, false],
            vec![QueryPoint { frame: 1, x: 0.1, y: 0.1 }],
            "r",
        )
        .unwrap();
        assert_eq!(ts.point_visibility(0), &[false, true]);
    }

    #[test]
    fn rejects_invalid_sets() {
        let q = vec![QueryPoint { frame: 0, x: 0.1, y: 0.1 }];
        assert!(TrackSet::new(10, 10, 1, 1, vec![[f32::NAN, 0.0]], vec![true], q.clone(), "").is_err());
        assert!(TrackSet::new(10, 10, 1, 2, vec![[0.0, 0.0]], vec![true], q.clone(), "").is_err());
        let late = vec![QueryPoint { frame: 5, x: 0.1, y: 0.1 }];
        assert!(TrackSet::new(10, 10, 1, 1, vec![[0.0, 0.0]], vec![true], late, "").is_err());
        assert!(TrackSet::new(0, 10, 1, 1, vec![[0.0, 0.0]], vec![true], q, "").is_err());
    }

    #[test]
    fn format_from_extension() {
        assert_eq!(TrackFormat::from_path(Path::new("a.JSON")), TrackFormat::Json);
        assert_eq!(TrackFormat::from_path(Path::new("a.fpdt")), TrackFormat::Binary);
    }

    fn arb_track_set() -> impl Strategy<Value = TrackSet> {
        (1usize..5, 1usize..7).prop_flat_map(|(m, t)| {
            (
                prop::collection::vec(prop::array::uniform2(-0.5f32..1.5), m * t),
                prop::collection::vec(any::<bool>(), m * t),
                prop::collection::vec((0..t, 0.0f32..=1.0, 0.0f32..=1.0), m),
            )
                .prop_map(move |(coords, vis, qs)| {
                    let queries = qs
                        .into_iter()
                        .map(|(frame, x, y)| QueryPoint { frame, x, y })
                        .collect();
                    TrackSet::new(320, 240, m, t, coords, vis, queries, "arb").unwrap()
                })
        })
    }

    proptest! {
        #[test]
        fn binary_round_trip_is_bit_exact(ts in arb_track_set()) {
            let back = decode_binary(&encode_binary(&ts), "arb").unwrap();
            prop_assert_eq!(back, ts);
        }

        #[test]
        fn json_round_trip(ts in arb_track_set()) {
            let text = serde_json::to_string(&JsonTrackFile::from(&ts)).unwrap();
            let file: JsonTrackFile = serde_json::from_str(&text).unwrap();
            let back = file.into_track_set("arb".into()).unwrap();
            prop_assert!(back.is_compatible(&ts));
            prop_assert_eq!(back.visibility(), ts.visibility());
            for (a, b) in back.coords().iter().zip(ts.coords()) {
                prop_assert!((a[0] as f64 - b[0] as f64).abs() <= 1e-9);
                prop_assert!((a[1] as f64 - b[1] as f64).abs() <= 1e-9);
            }
        }
    }
}
