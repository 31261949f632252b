//! End-to-end wiring: intra-frame fusion, tracking, training and evaluation.

use serde::{Deserialize, Serialize};

use crate::affinity::{dan_train, AssociationSample, DanModel, Scorer, TrainConfig, TrainReport};
use crate::detection::Frame;
use crate::error::{Error, Result};
use crate::eval::{evaluate, EvalConfig, EvalFrame, GroundTruthFrame, MetricReport};
use crate::inter_frame::Tracker;
use crate::intra_frame::{intra_frame_fuse, DcaSource, IntraDiagnostics};
use crate::scenario::{make_dan_dataset, CameraConfig, RunConfig, TrackRecord};

/// Which sensors and stages are enabled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Ablation {
    pub radar: bool,
    pub dca: bool,
}

impl Default for Ablation {
    fn default() -> Self {
        Self { radar: true, dca: true }
    }
}

#[derive(Debug, Clone, Default)]
pub struct RunOutput {
    /// One record per live track per frame, in frame then track-id order.
    pub records: Vec<TrackRecord>,
    pub diagnostics: Vec<IntraDiagnostics>,
}

pub fn make_scorer(run: &RunConfig, model: Option<DanModel>) -> Scorer {
    match model {
        Some(model) => Scorer::Dan {
            model,
            scales: run.similarity.clone(),
        },
        None => Scorer::Artificial(run.similarity.clone()),
    }
}

/// Runs fusion and tracking over a frame sequence.
///
/// Without radar, alignment (when enabled) falls back to size ranging of vision boxes.
pub fn run_pipeline(
    frames: &[Frame],
    camera: &CameraConfig,
    run: &RunConfig,
    scorer: &Scorer,
    ablation: Ablation,
) -> Result<RunOutput> {
    let mut cam = run.initial_camera(camera)?;
    let mut intra = run.intra.clone();
    intra.dca = ablation.dca;
    if !ablation.radar {
        intra.dca_source = DcaSource::ImageSize;
    }
    let mut tracker = Tracker::new(run.tracker.clone());
    let mut out = RunOutput::default();
    for frame in frames {
        let stripped;
        let input = if ablation.radar {
            frame
        } else {
            stripped = Frame {
                radar: Vec::new(),
                ..frame.clone()
            };
            &stripped
        };
        let fused = intra_frame_fuse(input, &mut cam, scorer, &intra);
        tracker.step(frame.t, &fused.detections, scorer);
        out.records
            .extend(tracker.tracks().iter().map(|tr| TrackRecord::from_track(frame.t, tr)));
        out.diagnostics.push(fused.diagnostics);
    }
    Ok(out)
}

/// Camera pitch at which training features are computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrainingPitch {
    /// The simulator's true pitch.
    #[default]
    True,
    /// The pitch the pipeline itself estimates with the hand-tuned scorer, so training sees
    /// the same feature errors as deployment.
    Aligned,
}

/// Association samples of a simulated run.
pub fn training_set(
    frames: &[Frame],
    truth: &[GroundTruthFrame],
    camera: &CameraConfig,
    run: &RunConfig,
    pitch: TrainingPitch,
) -> Result<Vec<AssociationSample>> {
    match pitch {
        TrainingPitch::True => make_dan_dataset(frames, truth, camera, &run.similarity, None),
        TrainingPitch::Aligned => {
            let scorer = make_scorer(run, None);
            let out = run_pipeline(frames, camera, run, &scorer, Ablation::default())?;
            let trace: Vec<f64> = out.diagnostics.iter().map(|d| d.pitch_after).collect();
            make_dan_dataset(frames, truth, camera, &run.similarity, Some(&trace))
        }
    }
}

/// Trains the affinity network on identity-labelled vision/radar pairs of a simulated run.
pub fn train_from_frames(
    frames: &[Frame],
    truth: &[GroundTruthFrame],
    camera: &CameraConfig,
    run: &RunConfig,
    train: &TrainConfig,
    pitch: TrainingPitch,
) -> Result<TrainReport> {
    dan_train(&training_set(frames, truth, camera, run, pitch)?, train)
}

/// Groups track records by ground-truth frame, keeping those of the evaluated class.
pub fn eval_frames(records: &[TrackRecord], truth: &[GroundTruthFrame], cfg: &EvalConfig) -> Result<Vec<EvalFrame>> {
    let mut frames: Vec<EvalFrame> = truth
        .iter()
        .map(|g| EvalFrame {
            t: g.t,
            predictions: Vec::new(),
            truth: g.objects.clone(),
        })
        .collect();
    let mut k = 0;
    for r in records {
        while k < frames.len() && frames[k].t < r.t {
            k += 1;
        }
        if k == frames.len() || frames[k].t != r.t {
            return Err(Error::Eval(format!(
                "track record at t={} has no ground-truth frame (track stream and ground truth disagree)",
                r.t
            )));
        }
        if cfg.class.is_none() || r.class == cfg.class {
            frames[k].predictions.push(r.prediction());
        }
    }
    Ok(frames)
}

pub fn evaluate_run(
    label: &str,
    records: &[TrackRecord],
    truth: &[GroundTruthFrame],
    cfg: &EvalConfig,
) -> Result<MetricReport> {
    evaluate(label, &eval_frames(records, truth, cfg)?, cfg)
}
