//! Sensor detections, frames and fused main-sub detections.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::affinity::CommonFeature;

/// A camera detection.
///
/// `u` is the column of the bounding box's horizontal center and `v` the row of its bottom
/// edge, so `(u, v)` is the bottom-center pixel used for ground-plane ranging.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VisionDetection {
    pub id: u32,
    pub u: f64,
    pub v: f64,
    pub w: f64,
    pub h: f64,
    pub conf: f64,
    #[serde(default = "default_class")]
    pub class: String,
    /// Range supplied by the detector itself; when present it replaces trigonometric ranging.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub range: Option<f64>,
    /// Radial velocity supplied by the detector, m/s.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vel: Option<f64>,
}

fn default_class() -> String {
    "car".to_string()
}

impl VisionDetection {
    /// A detection with only its bottom-center pixel and confidence set.
    pub fn bottom_center(id: u32, u: f64, v: f64, conf: f64) -> Self {
        Self {
            id,
            u,
            v,
            w: 0.0,
            h: 0.0,
            conf,
            class: default_class(),
            range: None,
            vel: None,
        }
    }
}

/// A radar detection in polar form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadarDetection {
    pub id: u32,
    pub range: f64,
    pub azimuth: f64,
    pub vel: f64,
    pub conf: f64,
}

/// All detections captured at one timestamp.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Frame {
    pub t: f64,
    pub vision: Vec<VisionDetection>,
    pub radar: Vec<RadarDetection>,
}

/// Which sensors contributed to a fused detection or a track.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Modality {
    VR,
    V,
    R,
}

impl Modality {
    pub const ALL: [Modality; 3] = [Modality::VR, Modality::V, Modality::R];

    pub fn has_vision(self) -> bool {
        matches!(self, Modality::VR | Modality::V)
    }

    pub fn has_radar(self) -> bool {
        matches!(self, Modality::VR | Modality::R)
    }

    /// The modality covering the sensors of both sides.
    pub fn union(self, other: Modality) -> Modality {
        let vision = self.has_vision() || other.has_vision();
        let radar = self.has_radar() || other.has_radar();
        match (vision, radar) {
            (true, true) => Modality::VR,
            (true, false) => Modality::V,
            _ => Modality::R,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Modality::VR => "VR",
            Modality::V => "V",
            Modality::R => "R",
        }
    }

    pub fn parse(s: &str) -> Option<Modality> {
        match s {
            "VR" => Some(Modality::VR),
            "V" => Some(Modality::V),
            "R" => Some(Modality::R),
            _ => None,
        }
    }
}

impl fmt::Display for Modality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Association stage that produced a fused detection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FusionStage {
    Local,
    Global,
    Single,
}

/// Output of intra-frame fusion in main-sub form.
///
/// For `VR` the vision detection is the main member and the radar detection the sub member.
/// When global association lets one radar detection serve several vision detections, exactly
/// one of those outputs owns it and the others mark it `radar_shared`.
#[derive(Debug, Clone, PartialEq)]
pub struct FusedDetection {
    pub modality: Modality,
    pub vision: Option<VisionDetection>,
    pub radar: Option<RadarDetection>,
    pub radar_shared: bool,
    /// Fused kinematics; `None` for vision detections that could not be ranged.
    pub feature: Option<CommonFeature>,
    pub vision_feature: Option<CommonFeature>,
    pub radar_feature: Option<CommonFeature>,
    pub class: Option<String>,
    pub stage: FusionStage,
    /// Similarity of the vision/radar pair, when paired.
    pub similarity: Option<f64>,
}

impl FusedDetection {
    pub fn vision_id(&self) -> Option<u32> {
        self.vision.as_ref().map(|v| v.id)
    }

    pub fn radar_id(&self) -> Option<u32> {
        self.radar.as_ref().map(|r| r.id)
    }
}
