//! Post-processing for point-tracking outputs.
//!
//! Given a video and several precomputed track sets for the same query
//! points, the crate decides whether the camera moves ([`mcmd`]), which
//! points stay put ([`mpd`]), assembles a fused track set from the sources
//! ([`dtc`]) and scores tracks with Average Jaccard ([`metrics`]). The
//! [`synth`] module renders scenes with known ground truth for testing, and
//! [`pipeline`] ties the stages together over batches and parameter sweeps.

pub mod dtc;
pub mod error;
pub mod mcmd;
pub mod metrics;
pub mod mpd;
pub mod pipeline;
pub mod rng;
pub mod ssim;
pub mod synth;
pub mod tracks;
pub mod video_io;

pub use dtc::{fuse, stabilize_static_track, FusionOutput, FusionPolicy};
pub use error::{Error, Result, Stage};
pub use mcmd::{detect_camera_motion, CameraMotionResult, McmdConfig};
pub use metrics::{average_jaccard, jaccard_at, MetricsConfig, MetricsReport};
pub use mpd::{detect_static_points, point_deviation, MpdConfig, PointMotionFlags};
pub use ssim::{ssim, SsimConfig};
pub use tracks::{load_tracks, save_tracks, QueryPoint, TrackFormat, TrackSet};
pub use video_io::{load_frame_sequence, to_grayscale, Frame, VideoSequence};
