//! Ground-truth distances, depth metrics and binned ranging accuracy.
//!
//! Coordinates are the vehicle frame: `x` lateral, `y` forward, ego at the origin.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::assignment::{hungarian, PAD_COST};
use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Lower edges of the ranging bins plus the upper edge of the last one, meters.
pub const BIN_EDGES: [f64; 5] = [0.0, 10.0, 30.0, 80.0, 105.0];
/// Base of the threshold-accuracy metrics `δ_i`.
pub const DELTA_BASE: f64 = 1.25;

/// A ground-truth object at one timestamp.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthObject {
    pub id: u32,
    /// Bird's-eye-view box corners `[x, y]`, meters.
    pub corners: [[f64; 2]; 4],
    pub distance: f64,
    pub visible: bool,
    /// Id of the vision detection generated from this object in the same frame.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vision_id: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub radar_id: Option<u32>,
}

impl GroundTruthObject {
    /// Midpoint of the two corners nearest the ego vehicle.
    pub fn reference_point(&self) -> Result<[f64; 2]> {
        nearest_edge_midpoint(&self.corners)
    }
}

/// Ground truth for one frame.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct GroundTruthFrame {
    pub t: f64,
    /// Camera pitch actually in effect, radians.
    #[serde(default)]
    pub pitch: f64,
    pub objects: Vec<GroundTruthObject>,
}

fn nearest_edge_midpoint(corners: &[[f64; 2]; 4]) -> Result<[f64; 2]> {
    if corners.iter().flatten().any(|c| !c.is_finite()) {
        return Err(Error::DegenerateBox("non-finite corner".into()));
    }
    for i in 0..4 {
        for j in i + 1..4 {
            if corners[i] == corners[j] {
                return Err(Error::DegenerateBox(format!("corners {i} and {j} coincide")));
            }
        }
    }
    let mut sorted = *corners;
    let norm = |c: &[f64; 2]| c[0].hypot(c[1]);
    // Coordinates break distance ties so the choice does not depend on corner order.
    sorted.sort_by(|a, b| {
        norm(a)
            .total_cmp(&norm(b))
            .then(a[0].total_cmp(&b[0]))
            .then(a[1].total_cmp(&b[1]))
    });
    Ok([
        0.5 * (sorted[0][0] + sorted[1][0]),
        0.5 * (sorted[0][1] + sorted[1][1]),
    ])
}

/// Distance to the midpoint of the two box corners closest to the ego vehicle, minus the
/// ego's bumper offset, clamped at zero.
pub fn gt_distance(corners: &[[f64; 2]; 4], bumper_offset: f64) -> Result<f64> {
    let m = nearest_edge_midpoint(corners)?;
    Ok((m[0].hypot(m[1]) - bumper_offset).max(0.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DepthMetrics {
    pub delta1: f64,
    pub delta2: f64,
    pub delta3: f64,
    pub abs_rel: f64,
    pub sq_rel: f64,
    pub rmse: f64,
    pub rmse_log: f64,
    pub count: usize,
}

pub fn depth_metrics(pred: &[f64], gt: &[f64]) -> Result<DepthMetrics> {
    if pred.len() != gt.len() {
        return Err(Error::shape_mismatch(&[gt.len()], &[pred.len()]));
    }
    if pred.is_empty() {
        return Err(Error::EmptyInput);
    }
    if let Some(&bad) = pred.iter().chain(gt).find(|&&x| !(x > 0.0) || !x.is_finite()) {
        return Err(Error::NonPositive(bad));
    }
    let n = pred.len() as f64;
    let mut within = [0usize; 3];
    let (mut abs_rel, mut sq_rel, mut sq, mut sq_log) = (0.0, 0.0, 0.0, 0.0);
    for (&p, &g) in pred.iter().zip(gt) {
        let ratio = (p / g).max(g / p);
        for (k, w) in within.iter_mut().enumerate() {
            if ratio < DELTA_BASE.powi(k as i32 + 1) {
                *w += 1;
            }
        }
        let d = p - g;
        abs_rel += d.abs() / g;
        sq_rel += d * d / g;
        sq += d * d;
        let dl = p.ln() - g.ln();
        sq_log += dl * dl;
    }
    Ok(DepthMetrics {
        delta1: within[0] as f64 / n,
        delta2: within[1] as f64 / n,
        delta3: within[2] as f64 / n,
        abs_rel: abs_rel / n,
        sq_rel: sq_rel / n,
        rmse: (sq / n).sqrt(),
        rmse_log: (sq_log / n).sqrt(),
        count: pred.len(),
    })
}

/// Index of the ranging bin holding `distance`; `None` beyond the last edge.
pub fn bin_index(distance: f64) -> Option<usize> {
    let last = BIN_EDGES.len() - 2;
    (0..=last).find(|&b| {
        let (lo, hi) = (BIN_EDGES[b], BIN_EDGES[b + 1]);
        distance >= lo && (distance < hi || (b == last && distance <= hi))
    })
}

/// Whether `pred` lies within `tolerance` relative error of `gt`.
pub fn range_correct(pred: f64, gt: f64, tolerance: f64) -> bool {
    (pred - gt).abs() <= tolerance * gt
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BinAccuracy {
    pub lo: f64,
    pub hi: f64,
    pub correct: usize,
    pub total: usize,
}

impl BinAccuracy {
    pub fn accuracy(&self) -> Option<f64> {
        (self.total > 0).then(|| self.correct as f64 / self.total as f64)
    }

    pub fn label(&self) -> String {
        format!("{}-{}m", self.lo, self.hi)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RangingAccuracy {
    pub bins: Vec<BinAccuracy>,
    pub correct: usize,
    pub total: usize,
}

impl RangingAccuracy {
    pub fn empty() -> Self {
        Self {
            bins: BIN_EDGES
                .windows(2)
                .map(|e| BinAccuracy {
                    lo: e[0],
                    hi: e[1],
                    correct: 0,
                    total: 0,
                })
                .collect(),
            correct: 0,
            total: 0,
        }
    }

    /// Accuracy over every evaluated object.
    pub fn average(&self) -> Option<f64> {
        (self.total > 0).then(|| self.correct as f64 / self.total as f64)
    }

    fn add(&mut self, pred: Option<f64>, gt: f64, tolerance: f64) {
        let Some(b) = bin_index(gt) else { return };
        let ok = pred.is_some_and(|p| range_correct(p, gt, tolerance));
        self.bins[b].total += 1;
        self.total += 1;
        if ok {
            self.bins[b].correct += 1;
            self.correct += 1;
        }
    }
}

/// Binned accuracy of `(prediction, gt)` samples. A missing prediction counts as wrong;
/// samples beyond the last bin are not evaluated.
pub fn ranging_accuracy(samples: &[(Option<f64>, f64)], tolerance: f64) -> RangingAccuracy {
    let mut acc = RangingAccuracy::empty();
    for &(p, g) in samples {
        acc.add(p, g, tolerance);
    }
    acc
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    /// Largest BEV distance at which a prediction may claim a ground-truth object, meters.
    pub gate: f64,
    /// Gate growth with range: the effective gate is `max(gate, gate_relative · distance)`.
    pub gate_relative: f64,
    pub half_lane: f64,
    pub tolerance: f64,
    /// Width of the distance histogram bins, meters.
    pub histogram_width: f64,
    /// Only outputs of this class are scored; `None` scores every output.
    pub class: Option<String>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            gate: 3.0,
            gate_relative: 0.1,
            half_lane: 1.75,
            tolerance: 0.10,
            histogram_width: 5.0,
            class: Some("car".to_string()),
        }
    }
}

/// A system output object at one timestamp.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PredictedObject {
    pub id: u64,
    pub range: f64,
    pub azimuth: f64,
}

impl PredictedObject {
    pub fn x(&self) -> f64 {
        self.range * self.azimuth.sin()
    }

    pub fn y(&self) -> f64 {
        self.range * self.azimuth.cos()
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct EvalFrame {
    pub t: f64,
    pub predictions: Vec<PredictedObject>,
    pub truth: Vec<GroundTruthObject>,
}

/// For each visible ground-truth object, the index of the prediction claiming it.
///
/// Minimum-total-distance assignment; pairs farther apart than the gate are dropped.
pub fn match_predictions(
    predictions: &[PredictedObject],
    truth: &[GroundTruthObject],
    cfg: &EvalConfig,
) -> Result<Vec<Option<usize>>> {
    let mut claims = vec![None; truth.len()];
    let visible: Vec<usize> = (0..truth.len()).filter(|&g| truth[g].visible).collect();
    if visible.is_empty() || predictions.is_empty() {
        return Ok(claims);
    }
    let refs: Vec<[f64; 2]> = visible
        .iter()
        .map(|&g| truth[g].reference_point())
        .collect::<Result<_>>()?;
    let gate = |g: usize| cfg.gate.max(cfg.gate_relative * truth[visible[g]].distance);
    let dist = |g: usize, p: usize| {
        let pr = &predictions[p];
        (pr.x() - refs[g][0]).hypot(pr.y() - refs[g][1])
    };
    let cost = Matrix::from_fn(visible.len(), predictions.len(), |g, p| {
        let d = dist(g, p);
        if d <= gate(g) {
            d
        } else {
            PAD_COST
        }
    });
    for (g, p) in hungarian(&cost)?.matched {
        if dist(g, p) <= gate(g) {
            claims[visible[g]] = Some(p);
        }
    }
    Ok(claims)
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct CipvAccuracy {
    pub correct: usize,
    /// Frames with an in-path ground-truth object.
    pub frames: usize,
}

impl CipvAccuracy {
    pub fn accuracy(&self) -> Option<f64> {
        (self.frames > 0).then(|| self.correct as f64 / self.frames as f64)
    }
}

/// Index of the nearest visible in-path ground-truth object.
pub fn gt_cipv(truth: &[GroundTruthObject], half_lane: f64) -> Result<Option<usize>> {
    let mut best: Option<(usize, f64)> = None;
    for (i, obj) in truth.iter().enumerate() {
        if !obj.visible {
            continue;
        }
        let r = obj.reference_point()?;
        if r[0].abs() < half_lane && best.is_none_or(|(_, d)| obj.distance < d) {
            best = Some((i, obj.distance));
        }
    }
    Ok(best.map(|(i, _)| i))
}

/// Index of the nearest in-path prediction.
pub fn predicted_cipv(predictions: &[PredictedObject], half_lane: f64) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, p) in predictions.iter().enumerate() {
        if p.x().abs() < half_lane && best.is_none_or(|(_, d)| p.range < d) {
            best = Some((i, p.range));
        }
    }
    best.map(|(i, _)| i)
}

/// Per-frame closest-in-path accuracy: the predicted CIPV must be the prediction matched to
/// the true CIPV and range it within tolerance. Frames without an in-path object are skipped.
pub fn cipv_accuracy(frames: &[EvalFrame], cfg: &EvalConfig) -> Result<CipvAccuracy> {
    let mut acc = CipvAccuracy::default();
    for frame in frames {
        let Some(g) = gt_cipv(&frame.truth, cfg.half_lane)? else {
            continue;
        };
        acc.frames += 1;
        let claims = match_predictions(&frame.predictions, &frame.truth, cfg)?;
        let predicted = predicted_cipv(&frame.predictions, cfg.half_lane);
        if let (Some(p), Some(claimed)) = (predicted, claims[g]) {
            if p == claimed && range_correct(frame.predictions[p].range, frame.truth[g].distance, cfg.tolerance) {
                acc.correct += 1;
            }
        }
    }
    Ok(acc)
}

/// Counts of ground-truth and matched predicted distances in fixed-width bins from 0 m.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistanceHistogram {
    pub width: f64,
    pub gt: Vec<usize>,
    pub pred: Vec<usize>,
}

impl DistanceHistogram {
    pub fn new(width: f64) -> Self {
        let n = (BIN_EDGES[BIN_EDGES.len() - 1] / width).ceil() as usize;
        Self {
            width,
            gt: vec![0; n],
            pred: vec![0; n],
        }
    }

    fn slot(&self, d: f64) -> Option<usize> {
        (d >= 0.0).then(|| ((d / self.width) as usize).min(self.gt.len() - 1))
    }

    fn add(&mut self, gt: f64, pred: Option<f64>) {
        if let Some(s) = self.slot(gt) {
            self.gt[s] += 1;
        }
        if let Some(s) = pred.and_then(|p| self.slot(p)) {
            self.pred[s] += 1;
        }
    }

    /// `lo,hi,gt,pred` CSV.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("lo,hi,gt,pred\n");
        for (k, (g, p)) in self.gt.iter().zip(&self.pred).enumerate() {
            let lo = k as f64 * self.width;
            let _ = writeln!(s, "{},{},{},{}", lo, lo + self.width, g, p);
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub label: String,
    /// `None` when no prediction matched any ground-truth object.
    pub depth: Option<DepthMetrics>,
    pub ranging: RangingAccuracy,
    pub cipv: CipvAccuracy,
    pub histogram: DistanceHistogram,
    pub frames: usize,
    pub matched: usize,
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |x| format!("{x:.4}"))
}

impl MetricReport {
    pub fn average(&self) -> Option<f64> {
        self.ranging.average()
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    /// Depth-metric table followed by the ranging-accuracy table.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{}", self.label);
        let _ = writeln!(
            s,
            "{:>8} {:>8} {:>8} {:>8} {:>8} {:>8} {:>8}",
            "d1", "d2", "d3", "AbsRel", "SqRel", "RMSE", "RMSElog"
        );
        match &self.depth {
            Some(d) => {
                let _ = writeln!(
                    s,
                    "{:>8.4} {:>8.4} {:>8.4} {:>8.4} {:>8.4} {:>8.4} {:>8.4}",
                    d.delta1, d.delta2, d.delta3, d.abs_rel, d.sq_rel, d.rmse, d.rmse_log
                );
            }
            None => {
                let _ = writeln!(s, "{:>8} {:>8} {:>8} {:>8} {:>8} {:>8} {:>8}", "-", "-", "-", "-", "-", "-", "-");
            }
        }
        s.push('\n');
        let mut header = String::new();
        let mut row = String::new();
        let mut counts = String::new();
        for b in &self.ranging.bins {
            let _ = write!(header, "{:>10}", b.label());
            let _ = write!(row, "{:>10}", fmt_opt(b.accuracy()));
            let _ = write!(counts, "{:>10}", b.total);
        }
        let _ = write!(header, "{:>10}{:>10}", "Average", "CIPV");
        let _ = write!(row, "{:>10}{:>10}", fmt_opt(self.average()), fmt_opt(self.cipv.accuracy()));
        let _ = write!(counts, "{:>10}{:>10}", self.ranging.total, self.cipv.frames);
        let _ = writeln!(s, "{:<8}{header}", "");
        let _ = writeln!(s, "{:<8}{row}", "acc");
        let _ = writeln!(s, "{:<8}{counts}", "n");
        s
    }
}

/// Scores every frame: ranging accuracy over all visible in-range objects (unclaimed ones
/// count as wrong), depth metrics over claimed ones, and CIPV accuracy.
pub fn evaluate(label: &str, frames: &[EvalFrame], cfg: &EvalConfig) -> Result<MetricReport> {
    let mut ranging = RangingAccuracy::empty();
    let mut histogram = DistanceHistogram::new(cfg.histogram_width);
    let (mut pred, mut gt) = (Vec::new(), Vec::new());
    for frame in frames {
        let claims = match_predictions(&frame.predictions, &frame.truth, cfg)?;
        for (obj, claim) in frame.truth.iter().zip(&claims) {
            if !obj.visible || bin_index(obj.distance).is_none() {
                continue;
            }
            let p = claim.map(|c| frame.predictions[c].range);
            ranging.add(p, obj.distance, cfg.tolerance);
            histogram.add(obj.distance, p);
            if let Some(p) = p {
                if p > 0.0 && obj.distance > 0.0 {
                    pred.push(p);
                    gt.push(obj.distance);
                }
            }
        }
    }
    let depth = if pred.is_empty() {
        None
    } else {
        Some(depth_metrics(&pred, &gt)?)
    };
    Ok(MetricReport {
        label: label.to_string(),
        depth,
        ranging,
        cipv: cipv_accuracy(frames, cfg)?,
        histogram,
        frames: frames.len(),
        matched: pred.len(),
    })
}
