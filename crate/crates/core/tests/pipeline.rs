mod common;

use std::fs;
use std::path::Path;

use common::{fixture, oracle_fuse};
use verifuse::pipeline::{self, Pipeline, PipelineConfig, RunRequest, StageModelConfig};
use verifuse::{Error, FusionConfig};

fn run9(workers: usize, gt: bool, out: &Path) -> verifuse::pipeline::RunOutput {
    let dir = fixture("run9");
    let cfg = PipelineConfig::load(&dir.join("config.json")).unwrap();
    let pipe = Pipeline::build(cfg, &dir).unwrap();
    let gt_path = dir.join("gt.csv");
    pipeline::run(
        &pipe,
        &RunRequest {
            frames_dir: &dir,
            manifest: None,
            ground_truth: gt.then_some(gt_path.as_path()),
            out_dir: out,
            workers,
            tolerance_s: 1.0,
        },
    )
    .unwrap()
}

#[test]
fn run9_matches_oracle_and_golden() {
    let tmp = tempfile::tempdir().unwrap();
    let out = run9(1, true, tmp.path());
    let c = out.stage_series[0].labels();
    let l = out.stage_series[1].labels();
    assert_eq!(c, [false, false, false, true, true, true, false, true, false]);
    assert_eq!(l, [false, false, false, false, false, false, true, false, false]);
    assert_eq!(out.fused.labels(), oracle_fuse(&c, &l, 3, 3, true));
    assert_eq!(out.fused.positive_count(), 1);
    assert!(out.fused.is_positive(5));

    let golden = fs::read_to_string(fixture("run9/expected_detections.csv")).unwrap();
    assert_eq!(fs::read_to_string(tmp.path().join("detections.csv")).unwrap(), golden);

    let report = out.report.unwrap();
    assert_eq!((report.events, report.matched, report.recalled_intervals), (1, 1, 1));
    assert!(tmp.path().join("report.json").exists());
}

#[test]
fn outputs_identical_across_worker_counts() {
    let files = ["detections.csv", "predictions.csv", "report.json"];
    let base = tempfile::tempdir().unwrap();
    run9(1, true, base.path());
    for w in [2, 4] {
        let tmp = tempfile::tempdir().unwrap();
        run9(w, true, tmp.path());
        for f in files {
            assert_eq!(
                fs::read(base.path().join(f)).unwrap(),
                fs::read(tmp.path().join(f)).unwrap(),
                "{f} differs at {w} workers"
            );
        }
    }
}

#[test]
fn no_ground_truth_means_no_report() {
    let tmp = tempfile::tempdir().unwrap();
    let out = run9(1, false, tmp.path());
    assert!(out.report.is_none());
    assert!(!tmp.path().join("report.json").exists());
    assert!(tmp.path().join("detections.csv").exists());
}

#[test]
fn predictions_file_evaluates_like_detections() {
    let tmp = tempfile::tempdir().unwrap();
    run9(1, true, tmp.path());
    let gt = fixture("run9/gt.csv");
    let a = pipeline::evaluate(&tmp.path().join("detections.csv"), &gt, None, 1.0).unwrap();
    let b = pipeline::evaluate(&tmp.path().join("predictions.csv"), &gt, Some(25.0), 1.0).unwrap();
    assert_eq!(
        (a.precision, a.recall, a.matched, a.recalled_intervals),
        (b.precision, b.recall, b.matched, b.recalled_intervals)
    );
    assert!(pipeline::evaluate(&tmp.path().join("predictions.csv"), &gt, None, 1.0).is_err());
}

#[test]
fn missing_weights_file_names_path() {
    let mut cfg = PipelineConfig::default();
    cfg.stages[0].model = StageModelConfig::Cnn {
        weights: "nope/model_c.tstm".into(),
    };
    let base = tempfile::tempdir().unwrap();
    match Pipeline::build(cfg, base.path()) {
        Err(e @ Error::Io { .. }) => {
            assert!(e.is_input_error());
            assert!(e.to_string().contains("model_c.tstm"), "{e}");
        }
        other => panic!("expected Io error, got {:?}", other.map(|_| ())),
    }
}

#[test]
fn saved_weights_drive_a_cnn_stage() {
    use verifuse::nn::{save_weights, ModelSpec, WeightStore};
    let tmp = tempfile::tempdir().unwrap();
    let spec = ModelSpec::default_model(32, 32, 3).unwrap();
    save_weights(&tmp.path().join("c.tstm"), &spec, &WeightStore::<f32>::random(&spec, 3)).unwrap();
    let mut cfg = PipelineConfig::from_json(&fs::read_to_string(fixture("run9/config.json")).unwrap()).unwrap();
    cfg.input.width = 32;
    cfg.input.height = 32;
    cfg.stages[0].model = StageModelConfig::Cnn {
        weights: "c.tstm".into(),
    };
    let pipe = Pipeline::build(cfg.clone(), tmp.path()).unwrap();
    let frames = verifuse::frameio::load_sequence(&fixture("run9"), &fixture("run9/manifest.json")).unwrap();
    let series = pipe.predict(&frames, 2).unwrap();
    assert_eq!(series.len(), 2);
    assert!(series[0].items().iter().all(|p| (0.0..=1.0).contains(&p.score)));
    assert_eq!(series, pipe.predict(&frames, 1).unwrap());

    // a weight file whose input disagrees with the config is rejected
    cfg.input.width = 64;
    cfg.input.height = 64;
    assert!(Pipeline::build(cfg, tmp.path()).is_err());
}

#[test]
fn config_file_round_trips() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = PipelineConfig {
        fusion: FusionConfig::frame_wise(),
        fps: Some(30.0),
        ..Default::default()
    };
    let p = tmp.path().join("cfg.json");
    fs::write(&p, cfg.to_json()).unwrap();
    assert_eq!(PipelineConfig::load(&p).unwrap(), cfg);
}
