//! Frame sequences on disk and in memory.
//!
//! A video is a directory of `*.png` / `*.ppm` files whose lexicographic
//! filename order is the temporal order (zero-pad the frame numbers). An
//! optional `manifest.json` carries `fps`, `width` and `height`.

use std::fs;
use std::path::{Path, PathBuf};

use image::DynamicImage;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Frame rate assumed when no manifest provides one.
pub const DEFAULT_FPS: f64 = 30.0;

/// Name of the manifest file looked up inside a frame directory.
pub const MANIFEST_NAME: &str = "manifest.json";

/// Rec. 709 luma weights.
pub const LUMA_WEIGHTS: [f32; 3] = [0.2126, 0.7152, 0.0722];

/// A single image with intensities in `[0, 1]`, stored row-major and
/// channel-interleaved.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    width: u32,
    height: u32,
    channels: u8,
    pixels: Vec<f32>,
}

impl Frame {
    pub fn new(width: u32, height: u32, channels: u8, pixels: Vec<f32>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidFrame("zero-sized frame".into()));
        }
        if channels != 1 && channels != 3 {
            return Err(Error::InvalidFrame(format!(
                "unsupported channel count {channels}"
            )));
        }
        let expected = width as usize * height as usize * channels as usize;
        if pixels.len() != expected {
            return Err(Error::InvalidFrame(format!(
                "expected {expected} values for {width}x{height}x{channels}, got {}",
                pixels.len()
            )));
        }
        if let Some(bad) = pixels.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::InvalidFrame(format!(
                "pixel value {bad} outside [0, 1]"
            )));
        }
        Ok(Self {
            width,
            height,
            channels,
            pixels,
        })
    }

    /// Single-channel frame.
    pub fn gray(width: u32, height: u32, pixels: Vec<f32>) -> Result<Self> {
        Self::new(width, height, 1, pixels)
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn channels(&self) -> u8 {
        self.channels
    }

    pub fn pixels(&self) -> &[f32] {
        &self.pixels
    }

    pub fn is_gray(&self) -> bool {
        self.channels == 1
    }

    fn from_image(img: DynamicImage) -> Result<Self> {
        let (width, height) = (img.width(), img.height());
        match img {
            DynamicImage::ImageLuma8(buf) => {
                let px = buf.into_raw().into_iter().map(|v| v as f32 / 255.0);
                Self::gray(width, height, px.collect())
            }
            DynamicImage::ImageLuma16(buf) => {
                let px = buf.into_raw().into_iter().map(|v| v as f32 / 65535.0);
                Self::gray(width, height, px.collect())
            }
            DynamicImage::ImageRgb8(buf) => {
                let px = buf.into_raw().into_iter().map(|v| v as f32 / 255.0);
                Self::new(width, height, 3, px.collect())
            }
            DynamicImage::ImageLumaA8(_) | DynamicImage::ImageLumaA16(_) => {
                let buf = img.to_luma16();
                let px = buf.into_raw().into_iter().map(|v| v as f32 / 65535.0);
                Self::gray(width, height, px.collect())
            }
            DynamicImage::ImageRgba8(_) => {
                let px = img.to_rgb8().into_raw().into_iter().map(|v| v as f32 / 255.0);
                Self::new(width, height, 3, px.collect())
            }
            other => {
                let buf = other.to_rgb32f();
                let px = buf.into_raw().into_iter().map(|v| v.clamp(0.0, 1.0));
                Self::new(width, height, 3, px.collect())
            }
        }
    }
}

/// Maps an RGB frame to Rec. 709 luma; gray frames are returned unchanged.
pub fn to_grayscale(frame: &Frame) -> Result<Frame> {
    match frame.channels {
        1 => Ok(frame.clone()),
        3 => {
            let [wr, wg, wb] = LUMA_WEIGHTS;
            let pixels = frame
                .pixels
                .chunks_exact(3)
                .map(|p| (wr * p[0] + wg * p[1] + wb * p[2]).clamp(0.0, 1.0))
                .collect();
            Frame::gray(frame.width, frame.height, pixels)
        }
        c => Err(Error::InvalidFrame(format!("unsupported channel count {c}"))),
    }
}

/// Optional per-directory metadata. Unknown keys are ignored.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fps: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub width: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub height: Option<u32>,
}

impl Manifest {
    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::json(path, e))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VideoSequence {
    frames: Vec<Frame>,
    fps: f64,
    width: u32,
    height: u32,
}

impl VideoSequence {
    pub fn new(frames: Vec<Frame>, fps: f64) -> Result<Self> {
        if !(fps.is_finite() && fps > 0.0) {
            return Err(Error::Config(format!("fps must be positive, got {fps}")));
        }
        let first = frames
            .first()
            .ok_or_else(|| Error::InvalidFrame("video has no frames".into()))?;
        let (width, height) = (first.width, first.height);
        if let Some(f) = frames
            .iter()
            .find(|f| f.width != width || f.height != height)
        {
            return Err(Error::MixedDimensions {
                path: PathBuf::new(),
                width,
                height,
                found_width: f.width,
                found_height: f.height,
            });
        }
        Ok(Self {
            frames,
            fps,
            width,
            height,
        })
    }

    pub fn frames(&self) -> &[Frame] {
        &self.frames
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn fps(&self) -> f64 {
        self.fps
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    /// Grayscale copy of every frame.
    pub fn grayscale(&self) -> Result<Vec<Frame>> {
        self.frames.iter().map(to_grayscale).collect()
    }
}

fn is_frame_file(path: &Path) -> bool {
    path.is_file()
        && path
            .extension()
            .and_then(|e| e.to_str())
            .map(|e| e.eq_ignore_ascii_case("png") || e.eq_ignore_ascii_case("ppm"))
            .unwrap_or(false)
}

/// Frame files of `dir` in lexicographic order.
pub fn list_frame_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut files = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if is_frame_file(&path) {
            files.push(path);
        }
    }
    files.sort();
    Ok(files)
}

/// Loads every PNG/PPM frame in `dir`.
///
/// When `manifest` is `None`, `dir/manifest.json` is used if it exists;
/// otherwise the frame rate defaults to [`DEFAULT_FPS`].
pub fn load_frame_sequence(dir: &Path, manifest: Option<&Path>) -> Result<VideoSequence> {
    let manifest = match manifest {
        Some(p) => Manifest::read(p)?,
        None => {
            let implicit = dir.join(MANIFEST_NAME);
            if implicit.is_file() {
                Manifest::read(&implicit)?
            } else {
                Manifest::default()
            }
        }
    };
    let fps = manifest.fps.unwrap_or(DEFAULT_FPS);
    if !(fps.is_finite() && fps > 0.0) {
        return Err(Error::Config(format!(
            "manifest fps must be positive, got {fps}"
        )));
    }

    let files = list_frame_files(dir)?;
    if files.is_empty() {
        return Err(Error::EmptyDirectory(dir.to_path_buf()));
    }

    let mut frames: Vec<Frame> = Vec::with_capacity(files.len());
    for path in &files {
        let img = image::open(path).map_err(|source| Error::Decode {
            path: path.clone(),
            source,
        })?;
        let frame = Frame::from_image(img)?;
        let (width, height) = match frames.first() {
            Some(f) => (f.width, f.height),
            None => (
                manifest.width.unwrap_or(frame.width),
                manifest.height.unwrap_or(frame.height),
            ),
        };
        if frame.width != width || frame.height != height {
            return Err(Error::MixedDimensions {
                path: path.clone(),
                width,
                height,
                found_width: frame.width,
                found_height: frame.height,
            });
        }
        frames.push(frame);
    }
    VideoSequence::new(frames, fps)
}

/// Writes a single-channel frame as an 8-bit PNG.
pub fn save_gray_png(frame: &Frame, path: &Path) -> Result<()> {
    let gray = to_grayscale(frame)?;
    let bytes: Vec<u8> = gray
        .pixels
        .iter()
        .map(|v| (v * 255.0).round() as u8)
        .collect();
    let buf = image::GrayImage::from_raw(gray.width, gray.height, bytes)
        .ok_or_else(|| Error::Invariant("pixel buffer size".into()))?;
    buf.save(path).map_err(|source| match source {
        image::ImageError::IoError(e) => Error::io(path, e),
        other => Error::Decode {
            path: path.to_path_buf(),
            source: other,
        },
    })
}

/// Writes a video as `frame_00000.png, ...` plus `manifest.json` into `dir`.
pub fn save_frame_sequence(video: &VideoSequence, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for (i, frame) in video.frames.iter().enumerate() {
        save_gray_png(frame, &dir.join(format!("frame_{i:05}.png")))?;
    }
    let manifest = Manifest {
        fps: Some(video.fps),
        width: Some(video.width),
        height: Some(video.height),
    };
    let path = dir.join(MANIFEST_NAME);
    let text = serde_json::to_string_pretty(&manifest).map_err(|e| Error::json(&path, e))?;
    fs::write(&path, text).map_err(|e| Error::io(&path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn rgb(r: f32, g: f32, b: f32) -> Frame {
        Frame::new(1, 1, 3, vec![r, g, b]).unwrap()
    }

    #[test]
    fn white_maps_to_one() {
        let g = to_grayscale(&rgb(1.0, 1.0, 1.0)).unwrap();
        assert!((g.pixels()[0] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn red_maps_to_its_weight() {
        let g = to_grayscale(&rgb(1.0, 0.0, 0.0)).unwrap();
        assert_eq!(g.pixels()[0], 0.2126);
    }

    #[test]
    fn gray_is_identity() {
        let f = Frame::gray(2, 1, vec![0.25, 0.75]).unwrap();
        assert_eq!(to_grayscale(&f).unwrap(), f);
    }

    #[test]
    fn frame_rejects_out_of_range_and_bad_shapes() {
        assert!(Frame::gray(1, 1, vec![1.5]).is_err());
        assert!(Frame::gray(1, 1, vec![f32::NAN]).is_err());
        assert!(Frame::gray(2, 2, vec![0.0; 3]).is_err());
        assert!(Frame::new(1, 1, 2, vec![0.0; 2]).is_err());
    }

    #[test]
    fn video_rejects_mixed_dimensions_and_bad_fps() {
        let a = Frame::gray(2, 2, vec![0.0; 4]).unwrap();
        let b = Frame::gray(1, 1, vec![0.0]).unwrap();
        assert!(matches!(
            VideoSequence::new(vec![a.clone(), b], 30.0),
            Err(Error::MixedDimensions { .. })
        ));
        assert!(VideoSequence::new(vec![a], 0.0).is_err());
        assert!(VideoSequence::new(vec![], 30.0).is_err());
    }

    proptest! {
        #[test]
        fn grayscale_idempotent_and_in_range(px in prop::collection::vec(0.0f32..=1.0, 12)) {
            let f = Frame::new(2, 2, 3, px).unwrap();
            let once = to_grayscale(&f).unwrap();
            prop_assert!(once.pixels().iter().all(|v| (0.0..=1.0).contains(v)));
            prop_assert_eq!(to_grayscale(&once).unwrap(), once);
        }
    }
}
