//! Per-frame cascaded camera/radar fusion.
//!
//! 1. Split both sensors' detections by confidence.
//! 2. Local association: one-to-one matching of the high-confidence sets.
//! 3. Dynamic coordinate alignment from the local pairs (or from size ranging when no radar
//!    is available), then re-range every vision detection with the updated pitch.
//! 4. Global association over everything left, letting one radar detection serve several
//!    vision detections.
//! 5. Emit `VR`, `V` and `R` fused detections.

use serde::{Deserialize, Serialize};

use crate::affinity::{CommonFeature, Scorer};
use crate::assignment::{assign_with_threshold, one_to_many_assign};
use crate::detection::{FusedDetection, FusionStage, Frame, Modality, RadarDetection, VisionDetection};
use crate::geometry::CameraModel;

/// Reference used to re-estimate the camera pitch each frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DcaSource {
    /// Radar ranges of local vision-radar pairs.
    Radar,
    /// Size ranging of high-confidence vision detections against a prior object height.
    ImageSize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IntraFrameConfig {
    /// `δ_V`: vision detections at or above this confidence are high-confidence.
    pub vision_conf_threshold: f64,
    /// `δ_R`.
    pub radar_conf_threshold: f64,
    pub local_threshold: f64,
    pub global_threshold: f64,
    /// Most vision detections one radar detection may absorb in global association; 0 = no cap.
    pub one_to_many_cap: usize,
    pub dca: bool,
    pub dca_source: DcaSource,
    /// Physical object height assumed by size ranging, meters.
    pub size_prior_height: f64,
}

impl Default for IntraFrameConfig {
    fn default() -> Self {
        Self {
            vision_conf_threshold: 0.6,
            radar_conf_threshold: 0.5,
            local_threshold: 0.6,
            global_threshold: 0.5,
            one_to_many_cap: 0,
            dca: true,
            dca_source: DcaSource::Radar,
            size_prior_height: 1.5,
        }
    }
}

/// Indices into the frame's vision and radar lists.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ConfidenceSplit {
    pub vision_high: Vec<usize>,
    pub vision_low: Vec<usize>,
    pub radar_high: Vec<usize>,
    pub radar_low: Vec<usize>,
}

/// Partitions detections by confidence; a confidence equal to the threshold counts as high.
pub fn split_by_confidence(frame: &Frame, vision_threshold: f64, radar_threshold: f64) -> ConfidenceSplit {
    let mut split = ConfidenceSplit::default();
    for (i, v) in frame.vision.iter().enumerate() {
        if v.conf >= vision_threshold {
            split.vision_high.push(i);
        } else {
            split.vision_low.push(i);
        }
    }
    for (i, r) in frame.radar.iter().enumerate() {
        if r.conf >= radar_threshold {
            split.radar_high.push(i);
        } else {
            split.radar_low.push(i);
        }
    }
    split
}

/// Indices are positions in the slices passed in.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct LocalAssociation {
    pub pairs: Vec<(usize, usize, f64)>,
    pub vision_leftover: Vec<usize>,
    pub radar_leftover: Vec<usize>,
}

pub fn local_association(
    vision: &[CommonFeature],
    radar: &[CommonFeature],
    scorer: &Scorer,
    threshold: f64,
) -> LocalAssociation {
    let sim = scorer.matrix(vision, radar);
    let a = assign_with_threshold(&sim, threshold);
    LocalAssociation {
        pairs: a.matched.iter().map(|&(i, j)| (i, j, sim[(i, j)])).collect(),
        vision_leftover: a.unmatched_rows,
        radar_leftover: a.unmatched_cols,
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct GlobalAssociation {
    pub pairs: Vec<(usize, usize, f64)>,
    pub vision_singles: Vec<usize>,
    pub radar_singles: Vec<usize>,
}

pub fn global_association(
    vision: &[CommonFeature],
    radar: &[CommonFeature],
    scorer: &Scorer,
    threshold: f64,
    cap: Option<usize>,
) -> GlobalAssociation {
    let sim = scorer.matrix(vision, radar);
    let picks = one_to_many_assign(&sim, threshold, cap);
    let mut vision_used = vec![false; vision.len()];
    let mut radar_used = vec![false; radar.len()];
    for &(i, j) in &picks {
        vision_used[i] = true;
        radar_used[j] = true;
    }
    GlobalAssociation {
        pairs: picks.iter().map(|&(i, j)| (i, j, sim[(i, j)])).collect(),
        vision_singles: (0..vision.len()).filter(|&i| !vision_used[i]).collect(),
        radar_singles: (0..radar.len()).filter(|&j| !radar_used[j]).collect(),
    }
}

/// Counters exposed in run reports.
#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct IntraDiagnostics {
    pub local_pairs: usize,
    pub global_pairs: usize,
    pub dca_pairs: usize,
    pub pitch_before: f64,
    pub pitch_after: f64,
    /// Vision detections that could not be ranged (at or above the horizon).
    pub unranged: usize,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct IntraFrameOutput {
    pub detections: Vec<FusedDetection>,
    pub diagnostics: IntraDiagnostics,
}

fn vr_feature(vision: &CommonFeature, radar: &RadarDetection) -> CommonFeature {
    CommonFeature::new(
        radar.range,
        vision.azimuth,
        radar.vel,
        vision.confidence.max(radar.conf),
    )
}

fn vision_features(vision: &[VisionDetection], camera: &CameraModel) -> Vec<Option<CommonFeature>> {
    vision
        .iter()
        .map(|v| match CommonFeature::from_vision(v, camera) {
            Ok(f) => Some(f),
            Err(e) => {
                log::debug!("vision detection {} excluded from association: {e}", v.id);
                None
            }
        })
        .collect()
}

/// Reference pairs `(Z′, vp)` for pitch estimation.
fn dca_pairs(
    cfg: &IntraFrameConfig,
    camera: &CameraModel,
    vision: &[VisionDetection],
    radar: &[RadarDetection],
    vision_high: &[usize],
    local_pairs: &[(usize, usize)],
) -> Vec<(f64, f64)> {
    match cfg.dca_source {
        DcaSource::Radar => local_pairs
            .iter()
            .map(|&(vi, ri)| {
                let r = &radar[ri];
                (r.range * r.azimuth.cos(), vision[vi].v)
            })
            .collect(),
        DcaSource::ImageSize => vision_high
            .iter()
            .filter_map(|&vi| {
                let v = &vision[vi];
                camera
                    .size_range(v.h, cfg.size_prior_height)
                    .ok()
                    .map(|z| (z, v.v))
            })
            .collect(),
    }
}

/// Runs the full intra-frame cascade on one frame, updating the camera pitch when DCA is on.
///
/// Every input detection appears exactly once in the output: each vision detection as the
/// main member of a `VR` or as a `V` single, each radar detection as the owned sub member of
/// one `VR` or as an `R` single. Output order depends only on detection ids.
pub fn intra_frame_fuse(
    frame: &Frame,
    camera: &mut CameraModel,
    scorer: &Scorer,
    cfg: &IntraFrameConfig,
) -> IntraFrameOutput {
    let mut vision = frame.vision.clone();
    vision.sort_by_key(|v| v.id);
    let mut radar = frame.radar.clone();
    radar.sort_by_key(|r| r.id);
    let sorted = Frame {
        t: frame.t,
        vision,
        radar,
    };
    let (vision, radar) = (&sorted.vision, &sorted.radar);
    let radar_features: Vec<CommonFeature> = radar.iter().map(CommonFeature::from_radar).collect();

    let mut diag = IntraDiagnostics {
        pitch_before: camera.pitch(),
        ..Default::default()
    };
    let split = split_by_confidence(&sorted, cfg.vision_conf_threshold, cfg.radar_conf_threshold);

    // Local association with the pitch carried over from the previous frame.
    let features = vision_features(vision, camera);
    let vh: Vec<usize> = split
        .vision_high
        .iter()
        .copied()
        .filter(|&i| features[i].is_some())
        .collect();
    let vh_feat: Vec<CommonFeature> = vh.iter().map(|&i| features[i].unwrap()).collect();
    let rh_feat: Vec<CommonFeature> = split.radar_high.iter().map(|&j| radar_features[j]).collect();
    let local = local_association(&vh_feat, &rh_feat, scorer, cfg.local_threshold);
    let local_pairs: Vec<(usize, usize, f64)> = local
        .pairs
        .iter()
        .map(|&(a, b, s)| (vh[a], split.radar_high[b], s))
        .collect();
    diag.local_pairs = local_pairs.len();

    if cfg.dca {
        let index_pairs: Vec<(usize, usize)> = local_pairs.iter().map(|&(v, r, _)| (v, r)).collect();
        let refs = dca_pairs(cfg, camera, vision, radar, &vh, &index_pairs);
        diag.dca_pairs = refs.len();
        camera.estimate_pitch(&refs);
    }
    diag.pitch_after = camera.pitch();

    // Re-range with the aligned pitch for the global stage and the outputs.
    let features = vision_features(vision, camera);
    diag.unranged = features.iter().filter(|f| f.is_none()).count();

    // Everything not paired locally, including high-confidence detections that only became
    // rangeable after alignment.
    let mut locally_paired = vec![false; vision.len()];
    for &(v, _, _) in &local_pairs {
        locally_paired[v] = true;
    }
    let vision_pool: Vec<usize> = (0..vision.len())
        .filter(|&i| !locally_paired[i] && features[i].is_some())
        .collect();
    let mut radar_pool: Vec<usize> = split
        .radar_low
        .iter()
        .copied()
        .chain(local.radar_leftover.iter().map(|&b| split.radar_high[b]))
        .collect();
    radar_pool.sort_unstable();

    let vl_feat: Vec<CommonFeature> = vision_pool.iter().map(|&i| features[i].unwrap()).collect();
    let rl_feat: Vec<CommonFeature> = radar_pool.iter().map(|&j| radar_features[j]).collect();
    let cap = (cfg.one_to_many_cap > 0).then_some(cfg.one_to_many_cap);
    let global = global_association(&vl_feat, &rl_feat, scorer, cfg.global_threshold, cap);
    let global_pairs: Vec<(usize, usize, f64)> = global
        .pairs
        .iter()
        .map(|&(a, b, s)| (vision_pool[a], radar_pool[b], s))
        .collect();
    diag.global_pairs = global_pairs.len();

    // The most similar claimant owns a shared radar detection; ties go to the lowest vision id.
    let mut owner: Vec<Option<(usize, f64)>> = vec![None; radar.len()];
    for &(v, r, s) in &global_pairs {
        match owner[r] {
            Some((_, best)) if best >= s => {}
            _ => owner[r] = Some((v, s)),
        }
    }

    let make_vr = |v: usize, r: usize, s: f64, stage: FusionStage, shared: bool| {
        let vf = features[v].expect("paired vision detections are ranged");
        FusedDetection {
            modality: Modality::VR,
            vision: Some(vision[v].clone()),
            radar: Some(radar[r].clone()),
            radar_shared: shared,
            feature: Some(vr_feature(&vf, &radar[r])),
            vision_feature: Some(vf),
            radar_feature: Some(radar_features[r]),
            class: Some(vision[v].class.clone()),
            stage,
            similarity: Some(s),
        }
    };

    let mut out = Vec::with_capacity(vision.len() + radar.len());
    for &(v, r, s) in &local_pairs {
        out.push(make_vr(v, r, s, FusionStage::Local, false));
    }
    for &(v, r, s) in &global_pairs {
        let shared = owner[r].map(|(o, _)| o) != Some(v);
        out.push(make_vr(v, r, s, FusionStage::Global, shared));
    }

    let mut vision_singles: Vec<usize> = global
        .vision_singles
        .iter()
        .map(|&a| vision_pool[a])
        .chain((0..vision.len()).filter(|&i| features[i].is_none()))
        .collect();
    vision_singles.sort_unstable();
    for v in vision_singles {
        out.push(FusedDetection {
            modality: Modality::V,
            vision: Some(vision[v].clone()),
            radar: None,
            radar_shared: false,
            feature: features[v],
            vision_feature: features[v],
            radar_feature: None,
            class: Some(vision[v].class.clone()),
            stage: FusionStage::Single,
            similarity: None,
        });
    }
    for &b in &global.radar_singles {
        let r = radar_pool[b];
        out.push(FusedDetection {
            modality: Modality::R,
            vision: None,
            radar: Some(radar[r].clone()),
            radar_shared: false,
            feature: Some(radar_features[r]),
            vision_feature: None,
            radar_feature: Some(radar_features[r]),
            class: None,
            stage: FusionStage::Single,
            similarity: None,
        });
    }

    IntraFrameOutput {
        detections: out,
        diagnostics: diag,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::affinity::SimilarityWeights;

    fn camera() -> CameraModel {
        CameraModel::new(1500.0, 500.0, 800.0, 1.5)
            .unwrap()
            .with_smoothing(1.0)
            .unwrap()
    }

    fn vision(id: u32, u: f64, v: f64, conf: f64) -> VisionDetection {
        VisionDetection {
            id,
            u,
            v,
            w: 80.0,
            h: 60.0,
            conf,
            class: "car".into(),
            range: None,
            vel: None,
        }
    }

    fn radar(id: u32, range: f64, azimuth: f64, conf: f64) -> RadarDetection {
        RadarDetection {
            id,
            range,
            azimuth,
            vel: 0.0,
            conf,
        }
    }

    fn scorer() -> Scorer {
        Scorer::Artificial(SimilarityWeights::default())
    }

    #[test]
    fn split_examples() {
        let frame = Frame {
            t: 0.0,
            vision: vec![vision(0, 800.0, 575.0, 0.9), vision(1, 800.0, 575.0, 0.5)],
            radar: vec![],
        };
        let s = split_by_confidence(&frame, 0.6, 0.5);
        assert_eq!((s.vision_high.len(), s.vision_low.len()), (1, 1));

        let s = split_by_confidence(&Frame::default(), 0.6, 0.5);
        assert_eq!(s, ConfidenceSplit::default());

        let frame = Frame {
            t: 0.0,
            vision: vec![vision(0, 800.0, 575.0, 0.6)],
            radar: vec![radar(0, 10.0, 0.0, 0.5)],
        };
        let s = split_by_confidence(&frame, 0.6, 0.5);
        assert_eq!((s.vision_high, s.radar_high), (vec![0], vec![0]));
    }

    #[test]
    fn local_association_examples() {
        let v = [CommonFeature::new(30.0, 0.0, 0.0, 0.9)];
        let r = [CommonFeature::new(30.5, 0.005, 0.0, 0.8)];
        // d = 0.5·0.1 + 0.3·0.1 = 0.08 → s = 0.92
        let la = local_association(&v, &r, &scorer(), 0.5);
        assert_eq!(la.pairs.len(), 1);
        assert!((la.pairs[0].2 - 0.92).abs() < 1e-12);

        let la = local_association(&[], &r, &scorer(), 0.5);
        assert!(la.pairs.is_empty());
        assert_eq!(la.radar_leftover, vec![0]);

        let v2 = [v[0], CommonFeature::new(30.2, 0.002, 0.0, 0.9)];
        let la = local_association(&v2, &r, &scorer(), 0.5);
        assert_eq!(la.pairs.len(), 1);
        assert_eq!(la.pairs[0].0, 1);
        assert_eq!(la.vision_leftover, vec![0]);
    }

    #[test]
    fn global_association_examples() {
        let v = [
            CommonFeature::new(30.0, -0.01, 0.0, 0.4),
            CommonFeature::new(30.0, 0.01, 0.0, 0.4),
        ];
        let r = [CommonFeature::new(30.0, 0.0, 0.0, 0.3)];
        let ga = global_association(&v, &r, &scorer(), 0.5, None);
        assert_eq!(ga.pairs.iter().map(|p| (p.0, p.1)).collect::<Vec<_>>(), vec![(0, 0), (1, 0)]);
        assert!(ga.vision_singles.is_empty() && ga.radar_singles.is_empty());

        let far = [CommonFeature::new(80.0, 0.3, 5.0, 0.3)];
        let ga = global_association(&v, &far, &scorer(), 0.5, None);
        assert!(ga.pairs.is_empty());
        assert_eq!((ga.vision_singles.len(), ga.radar_singles.len()), (2, 1));

        let ga = global_association(&v, &[], &scorer(), 0.5, None);
        assert_eq!(ga.vision_singles, vec![0, 1]);
    }

    #[test]
    fn one_high_confidence_pair_fuses() {
        let frame = Frame {
            t: 0.0,
            vision: vec![vision(4, 800.0, 575.0, 0.9)],
            radar: vec![radar(9, 30.2, 0.0, 0.9)],
        };
        let mut cam = camera();
        let out = intra_frame_fuse(&frame, &mut cam, &scorer(), &IntraFrameConfig::default());
        assert_eq!(out.detections.len(), 1);
        let d = &out.detections[0];
        assert_eq!(d.modality, Modality::VR);
        assert_eq!(d.stage, FusionStage::Local);
        let f = d.feature.unwrap();
        assert_eq!(f.range, 30.2);
        assert_eq!(d.class.as_deref(), Some("car"));
        assert_eq!(out.diagnostics.dca_pairs, 1);
    }

    #[test]
    fn vision_only_frame_gives_singles_and_keeps_pitch() {
        let frame = Frame {
            t: 0.0,
            vision: vec![vision(0, 800.0, 575.0, 0.9), vision(1, 900.0, 560.0, 0.3)],
            radar: vec![],
        };
        let mut cam = camera().with_pitch(0.01).unwrap();
        let out = intra_frame_fuse(&frame, &mut cam, &scorer(), &IntraFrameConfig::default());
        assert!(out.detections.iter().all(|d| d.modality == Modality::V));
        assert_eq!(out.detections.len(), 2);
        assert_eq!(cam.pitch(), 0.01);
    }

    #[test]
    fn unranged_vision_passes_through_without_feature() {
        let frame = Frame {
            t: 0.0,
            vision: vec![vision(0, 800.0, 480.0, 0.9)],
            radar: vec![radar(0, 30.0, 0.0, 0.9)],
        };
        let out = intra_frame_fuse(&frame, &mut camera(), &scorer(), &IntraFrameConfig::default());
        assert_eq!(out.detections.len(), 2);
        let v = out.detections.iter().find(|d| d.modality == Modality::V).unwrap();
        assert!(v.feature.is_none());
        assert_eq!(out.diagnostics.unranged, 1);
    }

    #[test]
    fn vision_ranged_only_after_alignment_reaches_global_stage() {
        // Row 490 is above the horizon at zero pitch but below it once aligned to ~0.025.
        let frame = Frame {
            t: 0.0,
            vision: vec![vision(0, 800.0, 575.0, 0.9), vision(1, 800.0, 490.0, 0.9)],
            radar: vec![radar(0, 20.0, 0.0, 0.9)],
        };
        let cfg = IntraFrameConfig {
            local_threshold: 0.3,
            ..IntraFrameConfig::default()
        };
        let mut cam = camera();
        let out = intra_frame_fuse(&frame, &mut cam, &scorer(), &cfg);
        assert!((cam.pitch() - 0.024901).abs() < 1e-6);
        assert_eq!(out.diagnostics.unranged, 0);
        let late = out.detections.iter().find(|d| d.vision_id() == Some(1)).unwrap();
        assert!(late.feature.is_some());
        assert_eq!(out.detections.len(), 2);
    }

    #[test]
    fn shared_radar_has_single_owner() {
        let cam = camera();
        let frame = Frame {
            t: 0.0,
            vision: vec![
                vision(0, 800.0 - 15.0, cam.project_ground_row(30.0), 0.4),
                vision(1, 800.0 + 15.0, cam.project_ground_row(30.0), 0.4),
            ],
            radar: vec![radar(0, 30.0, 0.0, 0.3)],
        };
        let out = intra_frame_fuse(&frame, &mut camera(), &scorer(), &IntraFrameConfig::default());
        assert_eq!(out.detections.len(), 2);
        assert!(out.detections.iter().all(|d| d.modality == Modality::VR));
        let owned = out.detections.iter().filter(|d| !d.radar_shared).count();
        assert_eq!(owned, 1);
    }

    #[test]
    fn size_ranging_dca_without_radar() {
        let truth = camera().with_pitch(0.02).unwrap();
        let z = 25.0;
        let bottom = truth.project_point_row(z, 0.0);
        let top = truth.project_point_row(z, 1.5);
        let frame = Frame {
            t: 0.0,
            vision: vec![VisionDetection {
                h: bottom - top,
                ..vision(0, 800.0, bottom, 0.9)
            }],
            radar: vec![],
        };
        let cfg = IntraFrameConfig {
            dca_source: DcaSource::ImageSize,
            ..IntraFrameConfig::default()
        };
        let mut cam = camera();
        intra_frame_fuse(&frame, &mut cam, &scorer(), &cfg);
        // Size ranging is a pinhole approximation under pitch, so only close agreement.
        assert!((cam.pitch() - 0.02).abs() < 2e-3, "{}", cam.pitch());
    }
}
