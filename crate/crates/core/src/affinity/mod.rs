//! Common features, the hand-tuned similarity score and the deep affinity network.
//!
//! Both scorers map a pair of [`CommonFeature`]s to a similarity in `[0, 1]`. The network sees
//! the componentwise absolute difference of the two features, each component divided by the
//! same scales the hand-tuned score uses, so its inputs are `O(1)`.

mod dan;
mod loss;
mod train;

pub use dan::{dan_forward, DanModel, DEFAULT_HIDDEN};
pub use loss::{affinity_loss, loss_gradients, mask_loss, DanGradients, LossKind};
pub use train::{dan_train, ranking_accuracy, AssociationSample, TrainConfig, TrainReport};

use serde::{Deserialize, Serialize};

use crate::detection::{RadarDetection, VisionDetection};
use crate::error::{Error, Result};
use crate::geometry::CameraModel;
use crate::matrix::AffinityMatrix;

/// Number of components in a [`CommonFeature`].
pub const FEATURE_DIM: usize = 4;

/// Sensor-independent kinematic description of an object.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CommonFeature {
    /// Ground range, meters.
    pub range: f64,
    /// Radians, positive right.
    pub azimuth: f64,
    /// Signed radial velocity, m/s.
    pub velocity: f64,
    pub confidence: f64,
}

impl CommonFeature {
    pub fn new(range: f64, azimuth: f64, velocity: f64, confidence: f64) -> Self {
        Self {
            range,
            azimuth,
            velocity,
            confidence,
        }
    }

    pub fn to_array(self) -> [f64; FEATURE_DIM] {
        [self.range, self.azimuth, self.velocity, self.confidence]
    }

    /// Radar measurements are already polar, so this is a direct copy.
    pub fn from_radar(det: &RadarDetection) -> Self {
        Self::new(det.range, det.azimuth, det.vel, det.conf)
    }

    /// Ranges a vision detection on the ground plane with the camera's current pitch.
    ///
    /// A detector-supplied range, when present, replaces trigonometric ranging. Velocity is
    /// the detector's estimate or zero without one.
    pub fn from_vision(det: &VisionDetection, camera: &CameraModel) -> Result<Self> {
        let bev = camera.vision_to_bev(det)?;
        let range = det.range.unwrap_or(bev.range);
        Ok(Self::new(
            range,
            bev.azimuth,
            det.vel.unwrap_or(0.0),
            det.conf,
        ))
    }

    pub fn x(&self) -> f64 {
        self.range * self.azimuth.sin()
    }

    pub fn y(&self) -> f64 {
        self.range * self.azimuth.cos()
    }
}

/// Borrowed detection from either sensor.
#[derive(Debug, Clone, Copy)]
pub enum DetectionRef<'a> {
    Vision(&'a VisionDetection),
    Radar(&'a RadarDetection),
}

pub fn extract_common_feature(det: DetectionRef<'_>, camera: &CameraModel) -> Result<CommonFeature> {
    match det {
        DetectionRef::Vision(v) => CommonFeature::from_vision(v, camera),
        DetectionRef::Radar(r) => Ok(CommonFeature::from_radar(r)),
    }
}

/// Weights and normalization scales of the hand-tuned similarity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimilarityWeights {
    pub w_range: f64,
    pub w_azimuth: f64,
    pub w_velocity: f64,
    /// Meters.
    pub thr_range: f64,
    /// Radians.
    pub thr_azimuth: f64,
    /// m/s.
    pub thr_velocity: f64,
}

impl Default for SimilarityWeights {
    fn default() -> Self {
        Self {
            w_range: 0.5,
            w_azimuth: 0.3,
            w_velocity: 0.2,
            thr_range: 5.0,
            thr_azimuth: 0.05,
            thr_velocity: 2.0,
        }
    }
}

impl SimilarityWeights {
    pub fn validate(&self) -> Result<()> {
        let thresholds = [self.thr_range, self.thr_azimuth, self.thr_velocity];
        if thresholds.iter().any(|t| !(t.is_finite() && *t > 0.0)) {
            return Err(Error::Config(format!(
                "similarity thresholds must be positive, got {thresholds:?}"
            )));
        }
        let weights = [self.w_range, self.w_azimuth, self.w_velocity];
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) || weights.iter().sum::<f64>() <= 0.0 {
            return Err(Error::Config(format!(
                "similarity weights must be non-negative with a positive sum, got {weights:?}"
            )));
        }
        Ok(())
    }

    /// Weights rescaled to sum to one.
    pub fn normalized_weights(&self) -> [f64; 3] {
        let sum = self.w_range + self.w_azimuth + self.w_velocity;
        [self.w_range / sum, self.w_azimuth / sum, self.w_velocity / sum]
    }

    /// Per-component scales for pair features; confidence is left unscaled.
    pub fn scales(&self) -> [f64; FEATURE_DIM] {
        [self.thr_range, self.thr_azimuth, self.thr_velocity, 1.0]
    }
}

/// Weighted normalized-difference score mapped to a similarity, `s = 1 − min(1, d)`.
///
/// `d = ω_r·F_r + ω_a·F_a + ω_v·F_v` with `F_x = min(1, |Δx| / thr_x)`. Confidence does not
/// enter this score.
pub fn artificial_similarity(a: &CommonFeature, b: &CommonFeature, w: &SimilarityWeights) -> f64 {
    let [wr, wa, wv] = w.normalized_weights();
    let term = |delta: f64, thr: f64| (delta.abs() / thr).min(1.0);
    let d = wr * term(a.range - b.range, w.thr_range)
        + wa * term(a.azimuth - b.azimuth, w.thr_azimuth)
        + wv * term(a.velocity - b.velocity, w.thr_velocity);
    1.0 - d.min(1.0)
}

/// `M×N×D` tensor of scaled absolute feature differences, row-major in `(i, j, k)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PairTensor {
    rows: usize,
    cols: usize,
    dim: usize,
    data: Vec<f64>,
}

impl PairTensor {
    pub fn from_vec(rows: usize, cols: usize, dim: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols * dim {
            return Err(Error::shape_mismatch(&[rows, cols, dim], &[data.len()]));
        }
        Ok(Self {
            rows,
            cols,
            dim,
            data,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn shape(&self) -> [usize; 3] {
        [self.rows, self.cols, self.dim]
    }

    /// Feature vector of pair `(i, j)`.
    pub fn pair(&self, i: usize, j: usize) -> &[f64] {
        let start = (i * self.cols + j) * self.dim;
        &self.data[start..start + self.dim]
    }

    /// The `(M·N)×D` view fed to the network.
    pub fn flat_pairs(&self) -> std::slice::ChunksExact<'_, f64> {
        self.data.chunks_exact(self.dim)
    }
}

/// Broadcasts two feature sets into the pair tensor.
pub fn build_pair_features(
    a: &[CommonFeature],
    b: &[CommonFeature],
    scales: &SimilarityWeights,
) -> Result<PairTensor> {
    if a.is_empty() {
        return Err(Error::EmptySet("first feature set"));
    }
    if b.is_empty() {
        return Err(Error::EmptySet("second feature set"));
    }
    let s = scales.scales();
    let mut data = Vec::with_capacity(a.len() * b.len() * FEATURE_DIM);
    for fa in a {
        let xa = fa.to_array();
        for fb in b {
            let xb = fb.to_array();
            data.extend((0..FEATURE_DIM).map(|k| (xa[k] - xb[k]).abs() / s[k]));
        }
    }
    PairTensor::from_vec(a.len(), b.len(), FEATURE_DIM, data)
}

/// Similarity function used by every association stage.
#[derive(Debug, Clone)]
pub enum Scorer {
    Artificial(SimilarityWeights),
    Dan {
        model: DanModel,
        scales: SimilarityWeights,
    },
}

impl Scorer {
    pub fn score(&self, a: &CommonFeature, b: &CommonFeature) -> f64 {
        match self {
            Scorer::Artificial(w) => artificial_similarity(a, b, w),
            Scorer::Dan { model, scales } => {
                let s = scales.scales();
                let (xa, xb) = (a.to_array(), b.to_array());
                let pair: Vec<f64> = (0..FEATURE_DIM)
                    .map(|k| (xa[k] - xb[k]).abs() / s[k])
                    .collect();
                model.forward_pair(&pair)
            }
        }
    }

    /// Similarity matrix with rows from `a` and columns from `b`; empty sets give an empty
    /// matrix of the right shape.
    pub fn matrix(&self, a: &[CommonFeature], b: &[CommonFeature]) -> AffinityMatrix {
        AffinityMatrix::from_fn(a.len(), b.len(), |i, j| self.score(&a[i], &b[j]))
    }

    /// Weights and scales of the hand-tuned similarity, also kept by the learned scorer.
    pub fn weights(&self) -> &SimilarityWeights {
        match self {
            Scorer::Artificial(w) => w,
            Scorer::Dan { scales, .. } => scales,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Scorer::Artificial(_) => "artificial",
            Scorer::Dan { .. } => "dan",
        }
    }
}
