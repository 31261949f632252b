//! Synthetic driving scenarios, file formats and run configuration.

mod config;
mod io;

pub use config::{apply_override, CameraConfig, Config, RunConfig};
pub use io::{
    load_frames, load_ground_truth, load_tracks, parse_frames, parse_ground_truth, parse_tracks,
    save_frames, save_ground_truth, save_tracks, write_frame_line, write_ground_truth_line,
    write_track_line, ParseMode, TrackRecord,
};

use std::f64::consts::TAU;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};
use serde::{Deserialize, Serialize};

use crate::affinity::{build_pair_features, AssociationSample, CommonFeature, SimilarityWeights};
use crate::detection::{Frame, RadarDetection, VisionDetection};
use crate::error::{Error, Result};
use crate::eval::{gt_distance, GroundTruthFrame, GroundTruthObject};
use crate::geometry::CameraModel;
use crate::matrix::LabelMatrix;

/// True camera pitch over time: `bias + amplitude · sin(2π t / period)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PitchProfile {
    pub bias: f64,
    pub amplitude: f64,
    pub period: f64,
}

impl Default for PitchProfile {
    fn default() -> Self {
        Self {
            bias: 0.0,
            amplitude: 0.0,
            period: 8.0,
        }
    }
}

impl PitchProfile {
    pub fn at(&self, t: f64) -> f64 {
        if self.amplitude == 0.0 {
            return self.bias;
        }
        self.bias + self.amplitude * (TAU * t / self.period).sin()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseConfig {
    /// Standard deviation of the bounding-box bottom-center and height, pixels.
    pub vision_px: f64,
    pub radar_range: f64,
    pub radar_azimuth: f64,
    pub radar_velocity: f64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self {
            vision_px: 1.0,
            radar_range: 0.3,
            radar_azimuth: 0.005,
            radar_velocity: 0.2,
        }
    }
}

/// Per-detection drop probabilities and radar blackout windows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DropoutConfig {
    pub vision: f64,
    pub radar: f64,
    /// `[first, last)` frame-index windows with no radar output at all.
    pub radar_silence: Vec<[usize; 2]>,
}

impl Default for DropoutConfig {
    fn default() -> Self {
        Self {
            vision: 0.0,
            radar: 0.0,
            radar_silence: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ClutterConfig {
    /// Mean number of false radar detections per frame.
    pub rate: f64,
    pub max_range: f64,
    pub conf_low: f64,
    pub conf_high: f64,
}

impl Default for ClutterConfig {
    fn default() -> Self {
        Self {
            rate: 0.0,
            max_range: 100.0,
            conf_low: 0.2,
            conf_high: 0.6,
        }
    }
}

/// Confidence `base − slope · range / 100 + U(−spread, spread)`, clamped to `[0.01, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ConfidenceModel {
    pub base: f64,
    pub slope: f64,
    pub spread: f64,
}

impl ConfidenceModel {
    fn sample(&self, range: f64, rng: &mut ChaCha8Rng) -> f64 {
        let jitter = if self.spread > 0.0 {
            rng.random_range(-self.spread..self.spread)
        } else {
            0.0
        };
        (self.base - self.slope * range / 100.0 + jitter).clamp(0.01, 1.0)
    }
}

impl Default for ConfidenceModel {
    fn default() -> Self {
        Self {
            base: 0.95,
            slope: 0.3,
            spread: 0.1,
        }
    }
}

/// Velocity switch of a scripted object at time `t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VelocityChange {
    pub t: f64,
    pub vx: f64,
    pub vy: f64,
}

/// A scripted object: box center, velocity relative to ego and box size, meters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectSpec {
    pub x: f64,
    pub y: f64,
    #[serde(default)]
    pub vx: f64,
    #[serde(default)]
    pub vy: f64,
    #[serde(default = "default_width")]
    pub width: f64,
    #[serde(default = "default_length")]
    pub length: f64,
    #[serde(default = "default_height")]
    pub height: f64,
    #[serde(default)]
    pub changes: Vec<VelocityChange>,
}

impl ObjectSpec {
    /// A stationary car-sized object centered at `(x, y)`.
    pub fn at(x: f64, y: f64) -> Self {
        Self {
            x,
            y,
            vx: 0.0,
            vy: 0.0,
            width: default_width(),
            length: default_length(),
            height: default_height(),
            changes: Vec::new(),
        }
    }
}

fn default_width() -> f64 {
    1.8
}

fn default_length() -> f64 {
    4.5
}

fn default_height() -> f64 {
    1.5
}

/// Randomly placed traffic in lanes. Objects that drive out of `[min_forward, max_forward]`
/// re-enter at the other end as new objects.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrafficConfig {
    pub count: usize,
    pub lanes: Vec<f64>,
    pub lane_jitter: f64,
    pub min_forward: f64,
    pub max_forward: f64,
    /// Relative longitudinal speeds are drawn from `U(−max_speed, max_speed)`.
    pub max_speed: f64,
    pub height_range: [f64; 2],
    pub width_range: [f64; 2],
    pub length_range: [f64; 2],
}

impl Default for TrafficConfig {
    fn default() -> Self {
        Self {
            count: 0,
            lanes: vec![-3.5, 0.0, 3.5],
            lane_jitter: 0.3,
            min_forward: 4.0,
            max_forward: 104.0,
            max_speed: 3.0,
            height_range: [1.4, 1.7],
            width_range: [1.7, 2.0],
            length_range: [4.0, 5.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioConfig {
    pub seed: u64,
    pub duration: f64,
    pub frame_rate: f64,
    /// Distance from the ego origin to its front bumper, subtracted from gt distances.
    pub bumper_offset: f64,
    pub radar_max_range: f64,
    /// Half of the radar's horizontal field of view, radians.
    pub radar_half_fov: f64,
    pub pitch: PitchProfile,
    pub noise: NoiseConfig,
    pub dropout: DropoutConfig,
    pub clutter: ClutterConfig,
    pub vision_confidence: ConfidenceModel,
    pub radar_confidence: ConfidenceModel,
    pub objects: Vec<ObjectSpec>,
    pub traffic: TrafficConfig,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            seed: 42,
            duration: 10.0,
            frame_rate: 10.0,
            bumper_offset: 0.0,
            radar_max_range: 150.0,
            radar_half_fov: 0.6,
            pitch: PitchProfile::default(),
            noise: NoiseConfig::default(),
            dropout: DropoutConfig::default(),
            clutter: ClutterConfig::default(),
            vision_confidence: ConfidenceModel::default(),
            radar_confidence: ConfidenceModel {
                base: 0.9,
                slope: 0.2,
                spread: 0.1,
            },
            objects: Vec::new(),
            traffic: TrafficConfig::default(),
        }
    }
}

fn check(ok: bool, msg: impl FnOnce() -> String) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(Error::Config(msg()))
    }
}

fn check_probability(name: &str, p: f64) -> Result<()> {
    check((0.0..=1.0).contains(&p), || format!("{name} must be in [0, 1], got {p}"))
}

fn check_sigma(name: &str, s: f64) -> Result<()> {
    check(s.is_finite() && s >= 0.0, || format!("{name} must be non-negative, got {s}"))
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        check(self.duration.is_finite() && self.duration >= 0.0, || {
            format!("duration must be non-negative, got {}", self.duration)
        })?;
        check(self.frame_rate.is_finite() && self.frame_rate > 0.0, || {
            format!("frame_rate must be positive, got {}", self.frame_rate)
        })?;
        check(self.pitch.period > 0.0, || "pitch.period must be positive".into())?;
        check(self.pitch.bias.abs() + self.pitch.amplitude.abs() < 0.5, || {
            "pitch profile exceeds 0.5 rad".into()
        })?;
        check_probability("dropout.vision", self.dropout.vision)?;
        check_probability("dropout.radar", self.dropout.radar)?;
        check_sigma("noise.vision_px", self.noise.vision_px)?;
        check_sigma("noise.radar_range", self.noise.radar_range)?;
        check_sigma("noise.radar_azimuth", self.noise.radar_azimuth)?;
        check_sigma("noise.radar_velocity", self.noise.radar_velocity)?;
        check_sigma("clutter.rate", self.clutter.rate)?;
        check(self.clutter.conf_low <= self.clutter.conf_high, || {
            "clutter.conf_low exceeds clutter.conf_high".into()
        })?;
        let t = &self.traffic;
        if t.count > 0 {
            check(!t.lanes.is_empty(), || "traffic.lanes is empty".into())?;
            check(t.min_forward < t.max_forward, || {
                "traffic.min_forward must be below traffic.max_forward".into()
            })?;
            for (name, r) in [
                ("height_range", t.height_range),
                ("width_range", t.width_range),
                ("length_range", t.length_range),
            ] {
                check(0.0 < r[0] && r[0] <= r[1], || format!("traffic.{name} must be positive and ordered"))?;
            }
        }
        for (i, o) in self.objects.iter().enumerate() {
            check(o.width > 0.0 && o.length > 0.0 && o.height > 0.0, || {
                format!("objects[{i}] needs positive dimensions")
            })?;
        }
        Ok(())
    }

    pub fn frame_count(&self) -> usize {
        (self.duration * self.frame_rate).round() as usize
    }
}

fn round6(x: f64) -> f64 {
    let r = (x * 1e6).round() / 1e6;
    if r == 0.0 {
        0.0
    } else {
        r
    }
}

/// Substreams of the scenario generator; each draws from its own ChaCha stream.
#[derive(Debug, Clone, Copy)]
enum Stream {
    Trajectory = 1,
    VisionNoise = 2,
    RadarNoise = 3,
    Dropout = 4,
    Clutter = 5,
    Confidence = 6,
}

fn substream(seed: u64, s: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(s as u64);
    rng
}

#[derive(Debug, Clone)]
struct Body {
    x: f64,
    y: f64,
    vx: f64,
    vy: f64,
    width: f64,
    length: f64,
    height: f64,
    changes: Vec<VelocityChange>,
    /// Wrap-around corridor for random traffic.
    corridor: Option<(f64, f64)>,
}

struct BodyState {
    /// Generation index; bumps each time a corridor object re-enters.
    lap: i64,
    x: f64,
    y: f64,
    vx: f64,
    vy: f64,
}

impl Body {
    fn at(&self, t: f64) -> BodyState {
        let (mut x, mut y, mut vx, mut vy, mut t0) = (self.x, self.y, self.vx, self.vy, 0.0);
        for c in self.changes.iter().filter(|c| c.t <= t) {
            x += vx * (c.t - t0);
            y += vy * (c.t - t0);
            (vx, vy, t0) = (c.vx, c.vy, c.t);
        }
        x += vx * (t - t0);
        y += vy * (t - t0);
        let mut lap = 0;
        if let Some((lo, hi)) = self.corridor {
            let span = hi - lo;
            let offset = y - lo;
            lap = offset.div_euclid(span) as i64;
            y = lo + offset.rem_euclid(span);
        }
        BodyState { lap, x, y, vx, vy }
    }

    fn corners(&self, s: &BodyState) -> [[f64; 2]; 4] {
        let (hw, hl) = (0.5 * self.width, 0.5 * self.length);
        [
            [s.x - hw, s.y - hl],
            [s.x + hw, s.y - hl],
            [s.x + hw, s.y + hl],
            [s.x - hw, s.y + hl],
        ]
    }
}

fn spawn_bodies(cfg: &ScenarioConfig) -> Vec<Body> {
    let mut bodies: Vec<Body> = cfg
        .objects
        .iter()
        .map(|o| Body {
            x: o.x,
            y: o.y,
            vx: o.vx,
            vy: o.vy,
            width: o.width,
            length: o.length,
            height: o.height,
            changes: o.changes.clone(),
            corridor: None,
        })
        .collect();
    let t = &cfg.traffic;
    let mut rng = substream(cfg.seed, Stream::Trajectory);
    let uniform = |rng: &mut ChaCha8Rng, r: [f64; 2]| {
        if r[0] < r[1] {
            rng.random_range(r[0]..r[1])
        } else {
            r[0]
        }
    };
    for _ in 0..t.count {
        let lane = t.lanes[rng.random_range(0..t.lanes.len())];
        let jitter = if t.lane_jitter > 0.0 {
            rng.random_range(-t.lane_jitter..t.lane_jitter)
        } else {
            0.0
        };
        let y = rng.random_range(t.min_forward..t.max_forward);
        let vy = uniform(&mut rng, [-t.max_speed, t.max_speed]);
        bodies.push(Body {
            x: lane + jitter,
            y,
            vx: 0.0,
            vy,
            width: uniform(&mut rng, t.width_range),
            length: uniform(&mut rng, t.length_range),
            height: uniform(&mut rng, t.height_range),
            changes: Vec::new(),
            corridor: Some((t.min_forward, t.max_forward)),
        });
    }
    bodies
}

/// Camera geometry with image bounds.
fn camera_at(cam: &CameraConfig, pitch: f64) -> Result<CameraModel> {
    cam.model()?.with_pitch(pitch)
}

struct Sampler {
    vision_noise: ChaCha8Rng,
    radar_noise: ChaCha8Rng,
    dropout: ChaCha8Rng,
    clutter: ChaCha8Rng,
    confidence: ChaCha8Rng,
}

fn gauss(rng: &mut ChaCha8Rng, sigma: f64) -> f64 {
    if sigma > 0.0 {
        Normal::new(0.0, sigma).expect("validated sigma").sample(rng)
    } else {
        0.0
    }
}

/// Simulates the configured scenario and returns sensor frames plus per-frame ground truth.
///
/// Vision boxes come from projecting each object's nearest box edge (and its roof) through
/// the camera at the true pitch; radar returns the same edge midpoint in polar form. Output
/// numbers are rounded to 6 decimals, so files written from them reload exactly.
pub fn generate_scenario(cfg: &ScenarioConfig, camera: &CameraConfig) -> Result<(Vec<Frame>, Vec<GroundTruthFrame>)> {
    cfg.validate()?;
    camera.model()?;
    let bodies = spawn_bodies(cfg);
    let mut s = Sampler {
        vision_noise: substream(cfg.seed, Stream::VisionNoise),
        radar_noise: substream(cfg.seed, Stream::RadarNoise),
        dropout: substream(cfg.seed, Stream::Dropout),
        clutter: substream(cfg.seed, Stream::Clutter),
        confidence: substream(cfg.seed, Stream::Confidence),
    };
    let clutter_count = (cfg.clutter.rate > 0.0)
        .then(|| Poisson::new(cfg.clutter.rate).map_err(|e| Error::Config(format!("clutter.rate: {e}"))))
        .transpose()?;
    let n_bodies = bodies.len() as u32;

    let n = cfg.frame_count();
    let mut frames = Vec::with_capacity(n);
    let mut truth = Vec::with_capacity(n);
    for k in 0..n {
        let t = round6(k as f64 / cfg.frame_rate);
        let pitch = cfg.pitch.at(t);
        let cam = camera_at(camera, pitch)?;
        let silenced = cfg
            .dropout
            .radar_silence
            .iter()
            .any(|w| (w[0]..w[1]).contains(&k));
        let mut frame = Frame {
            t,
            ..Frame::default()
        };
        let mut gt = GroundTruthFrame {
            t,
            pitch: round6(pitch),
            objects: Vec::new(),
        };
        for (b, body) in bodies.iter().enumerate() {
            let state = body.at(t);
            let corners = body.corners(&state).map(|c| c.map(round6));
            let Ok(distance) = gt_distance(&corners, cfg.bumper_offset) else {
                continue;
            };
            let mut object = GroundTruthObject {
                id: b as u32 + n_bodies * state.lap.max(0) as u32,
                corners,
                distance: round6(distance),
                visible: false,
                vision_id: None,
                radar_id: None,
            };
            let r = object.reference_point()?;
            let (rx, ry) = (r[0], r[1]);
            let range = rx.hypot(ry);

            if ry > 0.5 {
                let v = cam.project_ground_row(ry);
                let top = cam.project_point_row(ry, body.height);
                let u = cam.project_point_col(rx, ry, 0.0);
                let w = camera.focal_length * body.width / ry;
                let in_image = (0.0..camera.image_width).contains(&u)
                    && (0.0..camera.image_height).contains(&v)
                    && v > cam.principal_row() - cam.focal_length() * pitch.tan();
                if in_image {
                    object.visible = true;
                    let eu = gauss(&mut s.vision_noise, cfg.noise.vision_px);
                    let ev = gauss(&mut s.vision_noise, cfg.noise.vision_px);
                    let eh = gauss(&mut s.vision_noise, cfg.noise.vision_px);
                    let conf = cfg.vision_confidence.sample(range, &mut s.confidence);
                    let dropped = s.dropout.random::<f64>() < cfg.dropout.vision;
                    if !dropped {
                        let id = frame.vision.len() as u32;
                        object.vision_id = Some(id);
                        frame.vision.push(VisionDetection {
                            id,
                            u: round6(u + eu),
                            v: round6(v + ev),
                            w: round6(w),
                            h: round6((v - top + eh).max(1.0)),
                            conf: round6(conf),
                            class: "car".to_string(),
                            range: None,
                            vel: None,
                        });
                    }
                }
            }

            let azimuth = rx.atan2(ry);
            if range <= cfg.radar_max_range && azimuth.abs() <= cfg.radar_half_fov {
                object.visible = true;
                let er = gauss(&mut s.radar_noise, cfg.noise.radar_range);
                let ea = gauss(&mut s.radar_noise, cfg.noise.radar_azimuth);
                let evel = gauss(&mut s.radar_noise, cfg.noise.radar_velocity);
                let conf = cfg.radar_confidence.sample(range, &mut s.confidence);
                let dropped = s.dropout.random::<f64>() < cfg.dropout.radar;
                if !dropped && !silenced {
                    let radial = (rx * state.vx + ry * state.vy) / range;
                    let id = frame.radar.len() as u32;
                    object.radar_id = Some(id);
                    frame.radar.push(RadarDetection {
                        id,
                        range: round6((range + er).max(0.1)),
                        azimuth: round6(azimuth + ea),
                        vel: round6(radial + evel),
                        conf: round6(conf),
                    });
                }
            }
            gt.objects.push(object);
        }
        if let Some(poisson) = &clutter_count {
            let count = poisson.sample(&mut s.clutter) as usize;
            for _ in 0..count {
                let range = s.clutter.random_range(1.0..cfg.clutter.max_range.max(1.5));
                let azimuth = s.clutter.random_range(-cfg.radar_half_fov..=cfg.radar_half_fov);
                let vel = gauss(&mut s.clutter, 3.0);
                let conf = if cfg.clutter.conf_low < cfg.clutter.conf_high {
                    s.clutter.random_range(cfg.clutter.conf_low..cfg.clutter.conf_high)
                } else {
                    cfg.clutter.conf_low
                };
                if !silenced {
                    frame.radar.push(RadarDetection {
                        id: frame.radar.len() as u32,
                        range: round6(range),
                        azimuth: round6(azimuth),
                        vel: round6(vel),
                        conf: round6(conf),
                    });
                }
            }
        }
        frames.push(frame);
        truth.push(gt);
    }
    Ok((frames, truth))
}

/// Builds one association sample per frame from the generator's identity links.
///
/// Vision features are computed at `pitches[k]` for frame `k`, or at the frame's true pitch
/// when `pitches` is `None`. Vision detections that cannot be ranged are left out, and frames
/// with no vision or no radar detection are skipped.
pub fn make_dan_dataset(
    frames: &[Frame],
    truth: &[GroundTruthFrame],
    camera: &CameraConfig,
    scales: &SimilarityWeights,
    pitches: Option<&[f64]>,
) -> Result<Vec<AssociationSample>> {
    if frames.len() != truth.len() {
        return Err(Error::shape_mismatch(&[frames.len()], &[truth.len()]));
    }
    if let Some(p) = pitches {
        if p.len() != frames.len() {
            return Err(Error::shape_mismatch(&[frames.len()], &[p.len()]));
        }
    }
    let mut out = Vec::new();
    for (k, (frame, gt)) in frames.iter().zip(truth).enumerate() {
        let cam = camera_at(camera, pitches.map_or(gt.pitch, |p| p[k]))?;
        let mut vision: Vec<(u32, CommonFeature)> = frame
            .vision
            .iter()
            .filter_map(|v| CommonFeature::from_vision(v, &cam).ok().map(|f| (v.id, f)))
            .collect();
        vision.sort_by_key(|(id, _)| *id);
        let mut radar: Vec<(u32, CommonFeature)> = frame
            .radar
            .iter()
            .map(|r| (r.id, CommonFeature::from_radar(r)))
            .collect();
        radar.sort_by_key(|(id, _)| *id);
        if vision.is_empty() || radar.is_empty() {
            continue;
        }
        let va: Vec<CommonFeature> = vision.iter().map(|(_, f)| *f).collect();
        let ra: Vec<CommonFeature> = radar.iter().map(|(_, f)| *f).collect();
        let pairs = build_pair_features(&va, &ra, scales)?;
        let mut labels = LabelMatrix::zeros(va.len(), ra.len());
        for obj in &gt.objects {
            if let (Some(vid), Some(rid)) = (obj.vision_id, obj.radar_id) {
                let i = vision.iter().position(|(id, _)| *id == vid);
                let j = radar.iter().position(|(id, _)| *id == rid);
                if let (Some(i), Some(j)) = (i, j) {
                    labels[(i, j)] = 1.0;
                }
            }
        }
        out.push(AssociationSample { pairs, labels });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn noiseless(objects: Vec<ObjectSpec>, frames: usize) -> ScenarioConfig {
        ScenarioConfig {
            duration: frames as f64 / 10.0,
            noise: NoiseConfig {
                vision_px: 0.0,
                radar_range: 0.0,
                radar_azimuth: 0.0,
                radar_velocity: 0.0,
            },
            objects,
            ..ScenarioConfig::default()
        }
    }

    fn car(x: f64, y: f64) -> ObjectSpec {
        ObjectSpec {
            x,
            y,
            vx: 0.0,
            vy: 0.0,
            width: 1.8,
            length: 4.0,
            height: 1.5,
            changes: Vec::new(),
        }
    }

    #[test]
    fn noiseless_single_object() {
        // Box center 22 m ahead, so the near edge is at 20 m.
        let cfg = noiseless(vec![car(0.0, 22.0)], 10);
        let (frames, truth) = generate_scenario(&cfg, &CameraConfig::default()).unwrap();
        assert_eq!(frames.len(), 10);
        for (f, g) in frames.iter().zip(&truth) {
            assert_eq!((f.vision.len(), f.radar.len()), (1, 1));
            assert_eq!(f.radar[0].range, 20.0);
            assert_eq!(g.objects[0].distance, 20.0);
        }
    }

    #[test]
    fn vision_noise_propagates_to_range_at_first_order() {
        // Near edge at 30 m; dZ/dv = Z²/(f·h) = 0.4 m/px, so σ = 2 px gives about 0.8 m.
        let mut cfg = noiseless(vec![car(0.0, 32.0)], 1000);
        cfg.noise.vision_px = 2.0;
        let camera = CameraConfig::default();
        let (frames, _) = generate_scenario(&cfg, &camera).unwrap();
        let model = camera.model().unwrap().with_pitch(cfg.pitch.bias).unwrap();
        let ranges: Vec<f64> = frames
            .iter()
            .flat_map(|f| f.vision.iter().map(|d| model.trig_range(d.v).unwrap()))
            .collect();
        assert!(ranges.len() > 900);
        let n = ranges.len() as f64;
        let mean = ranges.iter().sum::<f64>() / n;
        let std = (ranges.iter().map(|z| (z - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
        let analytic = 30.0 * 30.0 / (1500.0 * 1.5) * 2.0;
        assert!((std / analytic - 1.0).abs() < 0.3, "empirical {std}, analytic {analytic}");
    }

    #[test]
    fn same_seed_same_output() {
        let cfg = ScenarioConfig {
            traffic: TrafficConfig {
                count: 6,
                ..TrafficConfig::default()
            },
            clutter: ClutterConfig {
                rate: 2.0,
                ..ClutterConfig::default()
            },
            dropout: DropoutConfig {
                vision: 0.1,
                radar: 0.1,
                radar_silence: vec![[3, 6]],
            },
            ..ScenarioConfig::default()
        };
        let a = generate_scenario(&cfg, &CameraConfig::default()).unwrap();
        let b = generate_scenario(&cfg, &CameraConfig::default()).unwrap();
        assert_eq!(a, b);
        for k in 3..6 {
            assert!(a.0[k].radar.is_empty());
        }
    }

    #[test]
    fn clutter_leaves_trajectories_alone() {
        let base = ScenarioConfig {
            traffic: TrafficConfig {
                count: 5,
                ..TrafficConfig::default()
            },
            ..ScenarioConfig::default()
        };
        let cluttered = ScenarioConfig {
            clutter: ClutterConfig {
                rate: 3.0,
                ..ClutterConfig::default()
            },
            ..base.clone()
        };
        let (_, a) = generate_scenario(&base, &CameraConfig::default()).unwrap();
        let (_, b) = generate_scenario(&cluttered, &CameraConfig::default()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn gt_distances_follow_corner_rule() {
        let cfg = ScenarioConfig {
            traffic: TrafficConfig {
                count: 8,
                ..TrafficConfig::default()
            },
            bumper_offset: 1.0,
            ..ScenarioConfig::default()
        };
        let (_, truth) = generate_scenario(&cfg, &CameraConfig::default()).unwrap();
        for obj in truth.iter().flat_map(|g| &g.objects) {
            let d = gt_distance(&obj.corners, 1.0).unwrap();
            assert!((obj.distance - d).abs() <= 5e-7);
        }
    }

    #[test]
    fn invalid_config_rejected() {
        let cfg = ScenarioConfig {
            dropout: DropoutConfig {
                vision: 1.5,
                ..DropoutConfig::default()
            },
            ..ScenarioConfig::default()
        };
        assert!(matches!(
            generate_scenario(&cfg, &CameraConfig::default()),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn two_by_two_dataset_is_identity() {
        let cfg = noiseless(vec![car(-2.0, 17.0), car(2.0, 42.0)], 1);
        let (frames, truth) = generate_scenario(&cfg, &CameraConfig::default()).unwrap();
        let data =
            make_dan_dataset(&frames, &truth, &CameraConfig::default(), &SimilarityWeights::default(), None).unwrap();
        assert_eq!(data.len(), 1);
        assert_eq!(data[0].labels, LabelMatrix::identity(2));
    }

    #[test]
    fn clutter_columns_are_unlabeled() {
        let cfg = ScenarioConfig {
            clutter: ClutterConfig {
                rate: 4.0,
                ..ClutterConfig::default()
            },
            ..noiseless(vec![car(0.0, 30.0)], 20)
        };
        let (frames, truth) = generate_scenario(&cfg, &CameraConfig::default()).unwrap();
        let data =
            make_dan_dataset(&frames, &truth, &CameraConfig::default(), &SimilarityWeights::default(), None).unwrap();
        for s in &data {
            let (m, n) = s.labels.shape();
            assert_eq!(m, 1);
            let ones: f64 = (0..n).map(|j| s.labels[(0, j)]).sum();
            assert_eq!(ones, 1.0);
            assert_eq!(s.labels[(0, 0)], 1.0);
        }
    }
}
