//! Camera and radar detection fusion with multi-object tracking.
//!
//! A frame's detections go through [`intra_frame::intra_frame_fuse`], which pairs vision and
//! radar detections and keeps the camera pitch aligned, and the fused detections feed a
//! [`inter_frame::Tracker`]. [`scenario`] simulates sensor streams with ground truth and
//! [`eval`] scores ranging against it.

pub mod affinity;
pub mod assignment;
pub mod detection;
pub mod error;
pub mod eval;
pub mod geometry;
pub mod inter_frame;
pub mod intra_frame;
pub mod matrix;
pub mod pipeline;
pub mod scenario;

pub use affinity::{CommonFeature, DanModel, LossKind, Scorer, SimilarityWeights, TrainConfig};
pub use assignment::{assign_with_threshold, hungarian, one_to_many_assign, Assignment};
pub use detection::{FusedDetection, Frame, Modality, RadarDetection, VisionDetection};
pub use error::{Error, Result};
pub use eval::{GroundTruthFrame, GroundTruthObject, MetricReport};
pub use geometry::CameraModel;
pub use inter_frame::{Track, TrackStatus, Tracker, TrackerConfig};
pub use intra_frame::{intra_frame_fuse, IntraFrameConfig};
pub use matrix::{AffinityMatrix, LabelMatrix, Matrix};
pub use pipeline::{run_pipeline, Ablation};
pub use scenario::{generate_scenario, CameraConfig, Config, RunConfig, ScenarioConfig, TrackRecord};
