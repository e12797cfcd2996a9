use std::fs;

use prfa::batch::run_batch_parallel;
use prfa::io::{load_dataset, load_png, write_dataset};
use prfa::report::{build_attack_report, to_json, RunInfo};
use prfa_core::synthetic::{suite, SceneConfig};
use prfa_core::{run_batch, AttackConfig, AttackMode, ToyDetector, ToyDetectorConfig};

fn toy() -> ToyDetector {
    ToyDetector::new(ToyDetectorConfig::default()).unwrap()
}

#[test]
fn parallel_batch_equals_serial_batch() {
    let det = toy();
    let samples = suite(13, 6, &SceneConfig::default(), det.config());
    let cfg = AttackConfig::new(3, 150);
    let serial = run_batch(&samples, &det, AttackMode::Prfa, &cfg, 9);
    for workers in [1, 3, 8] {
        let parallel = run_batch_parallel(&samples, &det, AttackMode::Prfa, &cfg, 9, workers);
        assert_eq!(parallel.len(), serial.len());
        for (p, s) in parallel.iter().zip(&serial) {
            let (mut p, s) = (p.clone().unwrap(), s.as_ref().unwrap());
            p.wall_time = s.wall_time;
            assert_eq!(&p, s);
        }
    }
}

#[test]
fn reports_are_byte_identical_across_runs() {
    let det = toy();
    let samples = suite(13, 4, &SceneConfig::default(), det.config());
    let cfg = AttackConfig::new(3, 200);
    let info = RunInfo { mode: AttackMode::Prfa, oracle: "toy-color-fill", budget: 200, seed: 1, epsilon: 0.05, num_classes: 3 };
    let report = |workers| {
        let results = run_batch_parallel(&samples, &det, AttackMode::Prfa, &cfg, 1, workers);
        to_json(&build_attack_report(&info, &samples, &results, &[]).unwrap())
    };
    let a = report(1);
    assert_eq!(a, report(4));
    let v: serde_json::Value = serde_json::from_str(&a).unwrap();
    for col in ["mAP", "mAP50", "mAP75", "mAP_S", "mAP_M", "mAP_L", "AQ"] {
        assert!(v.get(col).is_some(), "{col}");
    }
    assert!(v["AQ"].as_f64().unwrap() <= 200.0);
}

#[test]
fn dataset_skips_broken_items_and_keeps_the_rest() {
    let dir = tempfile::tempdir().unwrap();
    let det = toy();
    let samples = suite(4, 2, &SceneConfig::default(), det.config());
    write_dataset(dir.path(), 3, &samples).unwrap();

    let ann_path = dir.path().join("annotations.json");
    let mut ann: serde_json::Value = serde_json::from_str(&fs::read_to_string(&ann_path).unwrap()).unwrap();
    ann["images"]["missing.png"] = serde_json::json!([{"label": 0, "box": [0, 0, 4, 4]}]);
    ann["images"]["corrupt.png"] = serde_json::json!([{"label": 1, "box": [0, 0, 4, 4]}]);
    ann["images"]["badlabel.png"] = serde_json::json!([{"label": 7, "box": [0, 0, 4, 4]}]);
    fs::write(&ann_path, ann.to_string()).unwrap();
    fs::write(dir.path().join("images/corrupt.png"), b"\x89PNG\r\n\x1a\nnot really").unwrap();
    fs::copy(dir.path().join("images/scene_000.png"), dir.path().join("images/badlabel.png")).unwrap();
    fs::copy(dir.path().join("images/scene_000.png"), dir.path().join("images/unannotated.png")).unwrap();

    let data = load_dataset(&dir.path().join("images"), &ann_path, None).unwrap();
    assert_eq!(data.num_classes, 3);
    let names: Vec<&str> = data.samples.iter().map(|s| s.name.as_str()).collect();
    assert_eq!(names, ["scene_000", "scene_001"]);
    assert_eq!(data.samples[0].image, samples[0].image);
    assert_eq!(data.samples[1].objects, samples[1].objects);
    let failed: Vec<&str> = data.errors.iter().map(|e| e.name.as_str()).collect();
    assert_eq!(failed, ["badlabel.png", "corrupt.png", "missing.png", "unannotated.png"]);

    let results = run_batch_parallel(&data.samples, &det, AttackMode::Prfa, &AttackConfig::new(3, 50), 0, 2);
    assert!(results.iter().all(Result::is_ok));
}

#[test]
fn saved_adversarial_png_stays_within_budget() {
    let dir = tempfile::tempdir().unwrap();
    let det = toy();
    let samples = suite(21, 3, &SceneConfig::default(), det.config());
    let cfg = AttackConfig::new(3, 300);
    let results = run_batch_parallel(&samples, &det, AttackMode::Prfa, &cfg, 2, 2);
    let info = RunInfo { mode: AttackMode::Prfa, oracle: "toy", budget: 300, seed: 2, epsilon: 0.05, num_classes: 3 };
    let report = build_attack_report(&info, &samples, &results, &[]).unwrap();
    prfa::report::write_attack_outputs(dir.path(), AttackMode::Prfa, 0.05, &samples, &results, &report).unwrap();
    for s in &samples {
        let adv = load_png(&dir.path().join("adv").join(format!("{}.png", s.name))).unwrap();
        assert!(adv.linf_distance(&s.image) <= 0.05 + 1.0 / 255.0 + 1e-12);
        assert!(dir.path().join("delta").join(format!("{}.png", s.name)).exists());
        let trace: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(dir.path().join("trace").join(format!("{}.json", s.name))).unwrap())
                .unwrap();
        let objs: Vec<f64> = trace["trace"].as_array().unwrap().iter().map(|t| t["objective"].as_f64().unwrap()).collect();
        assert!(objs.windows(2).all(|w| w[1] <= w[0]));
    }
}
