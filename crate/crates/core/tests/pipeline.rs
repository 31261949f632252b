use fusetrack::pipeline::{evaluate_run, make_scorer};
use fusetrack::scenario::{parse_frames, parse_ground_truth, write_frame_line, write_ground_truth_line, ParseMode};
use fusetrack::{generate_scenario, run_pipeline, Ablation, Config, Modality, TrackStatus};

const FIXTURE: &str = include_str!("fixtures/scenario.toml");

const NOISELESS: &str = r#"
[scenario]
seed = 3
duration = 3.0
noise = { vision_px = 0.0, radar_range = 0.0, radar_azimuth = 0.0, radar_velocity = 0.0 }
vision_confidence = { base = 0.95, slope = 0.0, spread = 0.0 }
radar_confidence = { base = 0.9, slope = 0.0, spread = 0.0 }

[[scenario.objects]]
x = -3.5
y = 20.0
vy = 0.5

[[scenario.objects]]
x = 0.0
y = 35.0
vy = -1.0

[[scenario.objects]]
x = 3.5
y = 50.0
"#;

#[test]
fn noiseless_objects_each_get_one_confirmed_fused_track() {
    let cfg = Config::from_toml(NOISELESS, &[]).unwrap();
    let (frames, truth) = generate_scenario(&cfg.scenario, &cfg.camera).unwrap();
    let scorer = make_scorer(&cfg.run, None);
    let out = run_pipeline(&frames, &cfg.camera, &cfg.run, &scorer, Ablation::default()).unwrap();
    let n_confirm = cfg.run.tracker.n_confirm as usize;
    for (k, g) in truth.iter().enumerate().skip(n_confirm) {
        let records: Vec<_> = out.records.iter().filter(|r| r.t == g.t).collect();
        for obj in g.objects.iter().filter(|o| o.visible) {
            let owners: Vec<_> = records
                .iter()
                .filter(|r| r.status == TrackStatus::Confirmed && r.vision_id == obj.vision_id)
                .collect();
            assert_eq!(owners.len(), 1, "frame {k}, object {}", obj.id);
            assert_eq!(owners[0].modality, Modality::VR, "frame {k}, object {}", obj.id);
            assert_eq!(owners[0].radar_id, obj.radar_id, "frame {k}, object {}", obj.id);
        }
    }
    let report = evaluate_run("noiseless", &out.records, &truth, &cfg.run.eval).unwrap();
    assert_eq!(report.average(), Some(1.0));
}

#[test]
fn without_radar_every_track_is_vision_only() {
    let cfg = Config::from_toml(FIXTURE, &[]).unwrap();
    let (frames, _) = generate_scenario(&cfg.scenario, &cfg.camera).unwrap();
    let scorer = make_scorer(&cfg.run, None);
    let ablation = Ablation { radar: false, dca: true };
    let out = run_pipeline(&frames, &cfg.camera, &cfg.run, &scorer, ablation).unwrap();
    assert!(!out.records.is_empty());
    assert!(out.records.iter().all(|r| r.modality == Modality::V && r.radar_id.is_none()));
}

#[test]
fn alignment_recovers_ranging_on_a_pitched_road() {
    // The camera believes the road is flat while it is pitched by about 1.7 degrees.
    let overrides = [
        "scenario.duration=20.0".to_string(),
        "scenario.pitch.bias=0.03".to_string(),
        "scenario.pitch.amplitude=0.0".to_string(),
        "run.nominal_pitch=0.0".to_string(),
    ];
    let cfg = Config::from_toml(FIXTURE, &overrides).unwrap();
    let (frames, truth) = generate_scenario(&cfg.scenario, &cfg.camera).unwrap();
    let scorer = make_scorer(&cfg.run, None);
    let accuracy = |dca| {
        let out = run_pipeline(&frames, &cfg.camera, &cfg.run, &scorer, Ablation { radar: true, dca }).unwrap();
        evaluate_run("arm", &out.records, &truth, &cfg.run.eval).unwrap().average().unwrap()
    };
    let (with, without) = (accuracy(true), accuracy(false));
    assert!(with > without + 0.05, "with alignment {with}, without {without}");
}

#[test]
fn generated_streams_survive_a_text_round_trip() {
    let cfg = Config::from_toml(FIXTURE, &[]).unwrap();
    let (frames, truth) = generate_scenario(&cfg.scenario, &cfg.camera).unwrap();
    let mut text = String::new();
    for f in &frames {
        write_frame_line(&mut text, f);
    }
    let parsed = parse_frames(&text, ParseMode::Strict).unwrap();
    let mut again = String::new();
    for f in &parsed {
        write_frame_line(&mut again, f);
    }
    assert_eq!(text, again);

    let mut gt_text = String::new();
    for g in &truth {
        write_ground_truth_line(&mut gt_text, g);
    }
    let parsed = parse_ground_truth(&gt_text, ParseMode::Strict).unwrap();
    assert_eq!(parsed.len(), truth.len());
    let mut gt_again = String::new();
    for g in &parsed {
        write_ground_truth_line(&mut gt_again, g);
    }
    assert_eq!(gt_text, gt_again);
}
