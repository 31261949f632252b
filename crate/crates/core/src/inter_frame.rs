//! Track-to-detection association across frames and track lifecycle.
//!
//! A track and a fused detection each carry a modality tag (`VR`, `V` or `R`), giving nine
//! matching modes. Seven are homologous: the two sides share a sensor, and the similarity is
//! the (weighted) mean of the per-sensor similarities (`V-V`, `R-R`). `V-R` and `R-V` are
//! heterogeneous and compare the fused ground-plane features directly. Homologous pairs are
//! assigned first; heterogeneous ones only compete for what is left.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::affinity::{artificial_similarity, CommonFeature, Scorer};
use crate::assignment::assign_with_threshold;
use crate::detection::{FusedDetection, Modality};
use crate::matrix::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrackStatus {
    Tentative,
    Confirmed,
    Dead,
}

impl TrackStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            TrackStatus::Tentative => "tentative",
            TrackStatus::Confirmed => "confirmed",
            TrackStatus::Dead => "dead",
        }
    }
}

/// `(track tag, detection tag)` pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct MatchMode {
    pub track: Modality,
    pub detection: Modality,
}

impl MatchMode {
    pub fn new(track: Modality, detection: Modality) -> Self {
        Self { track, detection }
    }

    pub fn all() -> Vec<MatchMode> {
        Modality::ALL
            .iter()
            .flat_map(|&t| Modality::ALL.iter().map(move |&d| MatchMode::new(t, d)))
            .collect()
    }

    pub fn shares_vision(self) -> bool {
        self.track.has_vision() && self.detection.has_vision()
    }

    pub fn shares_radar(self) -> bool {
        self.track.has_radar() && self.detection.has_radar()
    }

    pub fn is_homologous(self) -> bool {
        self.shares_vision() || self.shares_radar()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrackerConfig {
    /// Similarity threshold of the homologous stage.
    pub track_threshold: f64,
    /// Similarity threshold of the heterogeneous stage.
    pub hetero_threshold: f64,
    /// Gain applied to the innovation when a track absorbs a detection.
    pub smoothing: f64,
    pub n_confirm: u32,
    pub n_miss: u32,
    pub history_len: usize,
    /// Whether a heterogeneous match may upgrade the track's tag (e.g. `V` + `R` → `VR`).
    pub upgrade_on_hetero: bool,
    /// Weight of `V-V` when both sensors are shared; `R-R` gets the remainder.
    pub vision_weight: f64,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        Self {
            track_threshold: 0.5,
            hetero_threshold: 0.6,
            smoothing: 0.5,
            n_confirm: 2,
            n_miss: 5,
            history_len: 16,
            upgrade_on_hetero: true,
            vision_weight: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrackEntry {
    pub t: f64,
    pub modality: Modality,
    pub vision_id: Option<u32>,
    pub radar_id: Option<u32>,
    pub feature: CommonFeature,
}

/// Per-sensor feature as last observed.
#[derive(Debug, Clone, Copy, PartialEq)]
struct SensorObservation {
    t: f64,
    feature: CommonFeature,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Track {
    id: u64,
    modality: Modality,
    status: TrackStatus,
    state: CommonFeature,
    last_t: f64,
    vision: Option<SensorObservation>,
    radar: Option<SensorObservation>,
    history: VecDeque<TrackEntry>,
    hits: u32,
    misses: u32,
    class: Option<String>,
    updated: bool,
}

/// Constant radial velocity extrapolation of a feature.
fn extrapolate(feature: &CommonFeature, velocity: f64, dt: f64) -> CommonFeature {
    CommonFeature {
        range: feature.range + velocity * dt,
        ..*feature
    }
}

/// Predicted fused state of `track` after `dt` seconds.
pub fn predict(track: &Track, dt: f64) -> CommonFeature {
    extrapolate(&track.state, track.state.velocity, dt.max(0.0))
}

impl Track {
    fn spawn(id: u64, det: &FusedDetection, feature: CommonFeature, t: f64, cfg: &TrackerConfig) -> Self {
        let mut track = Self {
            id,
            modality: det.modality,
            status: TrackStatus::Tentative,
            state: feature,
            last_t: t,
            vision: None,
            radar: None,
            history: VecDeque::with_capacity(cfg.history_len),
            hits: 1,
            misses: 0,
            class: det.class.clone(),
            updated: true,
        };
        track.observe_sensors(det, t);
        track.push_history(det, t, cfg.history_len);
        if cfg.n_confirm <= 1 {
            track.status = TrackStatus::Confirmed;
        }
        track
    }

    pub fn id(&self) -> u64 {
        self.id
    }

    pub fn modality(&self) -> Modality {
        self.modality
    }

    pub fn status(&self) -> TrackStatus {
        self.status
    }

    pub fn state(&self) -> &CommonFeature {
        &self.state
    }

    pub fn hits(&self) -> u32 {
        self.hits
    }

    pub fn misses(&self) -> u32 {
        self.misses
    }

    pub fn history(&self) -> &VecDeque<TrackEntry> {
        &self.history
    }

    pub fn class(&self) -> Option<&str> {
        self.class.as_deref()
    }

    pub fn last_update(&self) -> f64 {
        self.last_t
    }

    /// Whether a detection was absorbed in the latest update.
    pub fn updated(&self) -> bool {
        self.updated
    }

    /// Latest history entry, which holds the member ids of the current match.
    pub fn latest(&self) -> Option<&TrackEntry> {
        self.history.back()
    }

    fn sensor_prediction(&self, obs: Option<SensorObservation>, t: f64) -> CommonFeature {
        match obs {
            Some(o) => extrapolate(&o.feature, self.state.velocity, (t - o.t).max(0.0)),
            None => predict(self, t - self.last_t),
        }
    }

    fn observe_sensors(&mut self, det: &FusedDetection, t: f64) {
        if let Some(f) = det.vision_feature {
            self.vision = Some(SensorObservation { t, feature: f });
        }
        if let Some(f) = det.radar_feature {
            self.radar = Some(SensorObservation { t, feature: f });
        }
    }

    fn push_history(&mut self, det: &FusedDetection, t: f64, cap: usize) {
        if cap > 0 && self.history.len() == cap {
            self.history.pop_front();
        }
        self.history.push_back(TrackEntry {
            t,
            modality: det.modality,
            vision_id: det.vision_id(),
            radar_id: det.radar_id(),
            feature: self.state,
        });
    }

    fn absorb(&mut self, det: &FusedDetection, feature: CommonFeature, t: f64, hetero: bool, cfg: &TrackerConfig) {
        let pred = predict(self, t - self.last_t);
        let k = cfg.smoothing;
        let blend = |p: f64, m: f64| p + k * (m - p);
        // Vision-only detections without a detector velocity carry no velocity information.
        let measured_velocity = det.modality.has_radar()
            || det.vision.as_ref().is_some_and(|v| v.vel.is_some());
        self.state = CommonFeature {
            range: blend(pred.range, feature.range),
            azimuth: blend(pred.azimuth, feature.azimuth),
            velocity: if measured_velocity {
                blend(pred.velocity, feature.velocity)
            } else {
                pred.velocity
            },
            confidence: blend(pred.confidence, feature.confidence),
        };
        self.last_t = t;
        self.observe_sensors(det, t);
        if !hetero || cfg.upgrade_on_hetero {
            self.modality = self.modality.union(det.modality);
        }
        if self.class.is_none() {
            self.class = det.class.clone();
        }
        self.hits += 1;
        self.misses = 0;
        self.updated = true;
        if self.status == TrackStatus::Tentative && self.hits >= cfg.n_confirm {
            self.status = TrackStatus::Confirmed;
        }
        self.push_history(det, t, cfg.history_len);
    }

    fn miss(&mut self, t: f64, cfg: &TrackerConfig) {
        self.state = predict(self, t - self.last_t);
        self.last_t = t;
        self.misses += 1;
        self.updated = false;
        if self.misses >= cfg.n_miss {
            self.status = TrackStatus::Dead;
        }
    }
}

/// Similarity between a track predicted to time `t` and a fused detection at `t`.
///
/// Same-sensor members are compared with the hand-tuned similarity whatever the scorer;
/// the scorer decides cross-sensor matches. Returns 0 for detections without a feature.
pub fn pairwise_track_similarity(
    track: &Track,
    det: &FusedDetection,
    scorer: &Scorer,
    t: f64,
    cfg: &TrackerConfig,
) -> f64 {
    let Some(det_feature) = det.feature else {
        return 0.0;
    };
    let mode = MatchMode::new(track.modality, det.modality);
    if !mode.is_homologous() {
        return scorer.score(&predict(track, t - track.last_t), &det_feature);
    }
    // The learned scorer only ever saw vision/radar pairs, so same-sensor comparisons use
    // the hand-tuned similarity.
    let same_sensor = |a: &CommonFeature, b: &CommonFeature| artificial_similarity(a, b, scorer.weights());
    let vision = if mode.shares_vision() {
        det.vision_feature
            .map(|f| same_sensor(&track.sensor_prediction(track.vision, t), &f))
    } else {
        None
    };
    let radar = if mode.shares_radar() {
        det.radar_feature
            .map(|f| same_sensor(&track.sensor_prediction(track.radar, t), &f))
    } else {
        None
    };
    match (vision, radar) {
        (Some(v), Some(r)) => cfg.vision_weight * v + (1.0 - cfg.vision_weight) * r,
        (Some(v), None) => v,
        (None, Some(r)) => r,
        (None, None) => 0.0,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackMatch {
    pub track: usize,
    pub detection: usize,
    pub similarity: f64,
    /// `true` when matched in the heterogeneous stage.
    pub heterogeneous: bool,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct InterAssociation {
    pub matches: Vec<TrackMatch>,
    pub unmatched_tracks: Vec<usize>,
    pub unmatched_detections: Vec<usize>,
}

/// Two-stage association: homologous modes first, then heterogeneous modes on the leftovers.
pub fn inter_frame_associate(
    tracks: &[Track],
    dets: &[FusedDetection],
    scorer: &Scorer,
    t: f64,
    cfg: &TrackerConfig,
) -> InterAssociation {
    let stage = |rows: &[usize], cols: &[usize], homologous: bool, threshold: f64| {
        let sim = Matrix::from_fn(rows.len(), cols.len(), |a, b| {
            let (track, det) = (&tracks[rows[a]], &dets[cols[b]]);
            let mode = MatchMode::new(track.modality, det.modality);
            if mode.is_homologous() == homologous {
                pairwise_track_similarity(track, det, scorer, t, cfg)
            } else {
                0.0
            }
        });
        let a = assign_with_threshold(&sim, threshold);
        let matches: Vec<TrackMatch> = a
            .matched
            .iter()
            .map(|&(i, j)| TrackMatch {
                track: rows[i],
                detection: cols[j],
                similarity: sim[(i, j)],
                heterogeneous: !homologous,
            })
            .collect();
        let left_rows: Vec<usize> = a.unmatched_rows.iter().map(|&i| rows[i]).collect();
        let left_cols: Vec<usize> = a.unmatched_cols.iter().map(|&j| cols[j]).collect();
        (matches, left_rows, left_cols)
    };

    let all_tracks: Vec<usize> = (0..tracks.len()).collect();
    let usable: Vec<usize> = (0..dets.len()).filter(|&j| dets[j].feature.is_some()).collect();
    let (mut matches, rest_tracks, rest_dets) = stage(&all_tracks, &usable, true, cfg.track_threshold);
    let (hetero, unmatched_tracks, mut unmatched_detections) =
        stage(&rest_tracks, &rest_dets, false, cfg.hetero_threshold);
    matches.extend(hetero);
    matches.sort_by_key(|m| m.track);
    unmatched_detections.extend((0..dets.len()).filter(|&j| dets[j].feature.is_none()));
    unmatched_detections.sort_unstable();
    InterAssociation {
        matches,
        unmatched_tracks,
        unmatched_detections,
    }
}

/// Applies an association: matched tracks absorb their detection, unmatched ranged
/// detections start tentative tracks, and tracks with `n_miss` consecutive misses are removed.
///
/// Returns the number of tracks removed.
pub fn update_tracks(
    tracks: &mut Vec<Track>,
    assoc: &InterAssociation,
    dets: &[FusedDetection],
    t: f64,
    cfg: &TrackerConfig,
    next_id: &mut u64,
) -> usize {
    let mut matched = vec![false; tracks.len()];
    for m in &assoc.matches {
        let det = &dets[m.detection];
        if let Some(f) = det.feature {
            tracks[m.track].absorb(det, f, t, m.heterogeneous, cfg);
            matched[m.track] = true;
        }
    }
    for (track, was_matched) in tracks.iter_mut().zip(&matched) {
        if !was_matched {
            track.miss(t, cfg);
        }
    }
    for &j in &assoc.unmatched_detections {
        let det = &dets[j];
        if let Some(f) = det.feature {
            tracks.push(Track::spawn(*next_id, det, f, t, cfg));
            *next_id += 1;
        }
    }
    let before = tracks.len();
    tracks.retain(|tr| tr.status != TrackStatus::Dead);
    before - tracks.len()
}

/// Sequential multi-object tracker over fused detections.
#[derive(Debug, Clone)]
pub struct Tracker {
    tracks: Vec<Track>,
    next_id: u64,
    cfg: TrackerConfig,
}

impl Tracker {
    pub fn new(cfg: TrackerConfig) -> Self {
        Self {
            tracks: Vec::new(),
            next_id: 1,
            cfg,
        }
    }

    pub fn tracks(&self) -> &[Track] {
        &self.tracks
    }

    pub fn config(&self) -> &TrackerConfig {
        &self.cfg
    }

    pub fn step(&mut self, t: f64, dets: &[FusedDetection], scorer: &Scorer) -> InterAssociation {
        let assoc = inter_frame_associate(&self.tracks, dets, scorer, t, &self.cfg);
        update_tracks(&mut self.tracks, &assoc, dets, t, &self.cfg, &mut self.next_id);
        assoc
    }
}
