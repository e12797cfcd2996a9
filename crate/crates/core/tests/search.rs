use std::cell::{Cell, RefCell};

use prfa_core::synthetic::{suite, SceneConfig};
use prfa_core::{
    run_attack, run_batch, substream, AttackConfig, AttackError, AttackMode, BBox, Detection, DetectorOracle,
    GroundTruthObject, Image, OracleError, OracleInfo, Sample, ToyDetector, ToyDetectorConfig,
};
use rand::seq::SliceRandom;

fn toy() -> ToyDetector {
    ToyDetector::new(ToyDetectorConfig::default()).unwrap()
}

/// A 16x16 red object whose only passing window has fill 141/256 ≈ 0.55.
fn near_threshold_scene() -> (Image, Vec<GroundTruthObject>) {
    let mut img = Image::zeros(64, 64);
    let mut cells: Vec<usize> = (0..256).collect();
    cells.shuffle(&mut substream(99, 0));
    for &i in &cells[..141] {
        img.set_pixel(12 + i / 16, 12 + i % 16, [0.73, 0.0, 0.0]);
    }
    (img, vec![GroundTruthObject::new(BBox::square(12, 12, 16), 0)])
}

/// Records every queried image.
struct Recording<'a, O> {
    inner: &'a O,
    seen: RefCell<Vec<Image>>,
}

impl<O: DetectorOracle> DetectorOracle for Recording<'_, O> {
    fn detect(&self, image: &Image) -> Result<Vec<Detection>, OracleError> {
        self.seen.borrow_mut().push(image.clone());
        self.inner.detect(image)
    }

    fn info(&self) -> OracleInfo {
        self.inner.info()
    }
}

/// Fails on the `fail_at`-th call (0-based).
struct Flaky {
    inner: ToyDetector,
    calls: Cell<usize>,
    fail_at: usize,
}

impl DetectorOracle for Flaky {
    fn detect(&self, image: &Image) -> Result<Vec<Detection>, OracleError> {
        let n = self.calls.get();
        self.calls.set(n + 1);
        if n == self.fail_at {
            return Err(OracleError::Transport("connection reset".into()));
        }
        self.inner.detect(image)
    }

    fn info(&self) -> OracleInfo {
        self.inner.info()
    }
}

#[test]
fn near_threshold_object_falls_quickly() {
    let (img, gts) = near_threshold_scene();
    let det = toy();
    let clean = det.detect_image(&img);
    assert_eq!(clean.len(), 1);
    assert_eq!(clean[0].bbox, BBox::square(12, 12, 16));
    assert!((clean[0].score - 141.0 / 256.0).abs() < 1e-12);

    let cfg = AttackConfig::new(3, 200);
    let r = run_attack(&img, &gts, &det, AttackMode::Prfa, &cfg, &mut substream(7, 0)).unwrap();
    assert!(r.state.succeeded);
    // Realized on the pinned seed.
    assert_eq!(r.state.queries_used, 2);
}

#[test]
fn zero_budget_issues_no_query() {
    let (img, gts) = near_threshold_scene();
    let rec = Recording { inner: &toy(), seen: RefCell::new(Vec::new()) };
    let r = run_attack(&img, &gts, &rec, AttackMode::Prfa, &AttackConfig::new(3, 0), &mut substream(0, 0)).unwrap();
    assert_eq!(r.state.queries_used, 0);
    assert!(rec.seen.borrow().is_empty());
    assert_eq!(r.adversarial, img);
    assert!(!r.state.succeeded);
}

#[test]
fn already_successful_image_stops_after_clean_query() {
    let img = Image::zeros(64, 64);
    let gts = vec![GroundTruthObject::new(BBox::square(10, 10, 20), 0)];
    let r = run_attack(&img, &gts, &toy(), AttackMode::Prfa, &AttackConfig::new(3, 100), &mut substream(0, 0)).unwrap();
    assert!(r.state.succeeded);
    assert_eq!(r.state.queries_used, 1);
    assert_eq!(r.state.best_objective, 0.0);
}

#[test]
fn identical_seeds_give_identical_runs() {
    let det = toy();
    let s = &suite(3, 1, &SceneConfig::default(), det.config())[0];
    let cfg = AttackConfig::new(3, 300);
    let a = run_attack(&s.image, &s.objects, &det, AttackMode::Prfa, &cfg, &mut substream(5, 0)).unwrap();
    let b = run_attack(&s.image, &s.objects, &det, AttackMode::Prfa, &cfg, &mut substream(5, 0)).unwrap();
    assert_eq!(a, b);
    let bits = |r: &prfa_core::AttackResult| r.state.trace.iter().map(|t| t.objective.to_bits()).collect::<Vec<_>>();
    assert_eq!(bits(&a), bits(&b));
}

#[test]
fn budget_trace_and_ball_invariants_hold_for_every_mode() {
    let det = toy();
    let samples = suite(11, 4, &SceneConfig::default(), det.config());
    let cfg = AttackConfig::new(3, 150);
    for mode in AttackMode::ALL {
        for (i, s) in samples.iter().enumerate() {
            let rec = Recording { inner: &det, seen: RefCell::new(Vec::new()) };
            let r = run_attack(&s.image, &s.objects, &rec, mode, &cfg, &mut substream(1, i as u64)).unwrap();
            let st = &r.state;
            assert!(st.queries_used <= cfg.budget);
            assert_eq!(st.queries_used, rec.seen.borrow().len());
            assert_eq!(st.trace.len(), st.queries_used);
            assert!(st.trace.windows(2).all(|w| w[1].objective <= w[0].objective));
            for w in st.trace.windows(2) {
                assert_eq!(w[1].accepted, w[1].objective < w[0].objective);
            }
            if st.succeeded {
                assert!(st.trace.last().unwrap().accepted);
            } else {
                assert_eq!(st.queries_used, cfg.budget);
            }
            assert!(st.best_perturbation.linf_norm() <= cfg.schedule.epsilon);
            assert_eq!(r.adversarial, s.image.add_clamped(&st.best_perturbation));
            for q in rec.seen.borrow().iter() {
                assert!(q.linf_distance(&s.image) <= cfg.schedule.epsilon + 1e-12);
                assert!(q.as_slice().iter().all(|v| (0.0..=1.0).contains(v)));
            }
        }
    }
}

#[test]
fn mode_lattice_is_respected() {
    let det = toy();
    let s = &suite(2, 1, &SceneConfig { jitter: (0.10, 0.20), ..SceneConfig::default() }, det.config())[0];
    // Unattackable objects keep every run going for the full budget.
    let cfg = AttackConfig::new(3, 60);
    let stats = |mode| run_attack(&s.image, &s.objects, &det, mode, &cfg, &mut substream(0, 0)).unwrap().state;
    for mode in [AttackMode::SquareShaped, AttackMode::SSPrior] {
        let st = stats(mode);
        assert_eq!(st.stats.flips, 0, "{mode}");
        assert_eq!(st.stats.max_parallel, 1);
        assert_eq!(st.stats.patches, 59);
    }
    let st = stats(AttackMode::SSPriorFlip);
    assert_eq!((st.stats.flips, st.stats.max_parallel), (59, 1));
    let st = stats(AttackMode::SSPriorParallel);
    assert_eq!((st.stats.flips, st.stats.max_parallel), (0, 4));
    let st = stats(AttackMode::Prfa);
    assert_eq!(st.stats.max_parallel, 4);
    // 19 queries with 4 patches, then 40 with 2.
    assert_eq!(st.stats.patches, 19 * 4 + 40 * 2);
    assert_eq!(st.stats.flips, st.stats.patches);
}

#[test]
fn prior_confines_patches_near_predicted_boxes() {
    let det = toy();
    let s = &suite(2, 1, &SceneConfig { jitter: (0.10, 0.20), max_objects: 1, ..SceneConfig::default() }, det.config())[0];
    let clean = det.detect_image(&s.image);
    let top = clean.iter().map(|d| d.bbox.y1).fold(f64::INFINITY, f64::min);
    let left = clean.iter().map(|d| d.bbox.x1).fold(f64::INFINITY, f64::min);
    let dilation = 6.0;
    let cfg = AttackConfig::new(3, 100);
    let changed_extent = |mode| {
        let rec = Recording { inner: &det, seen: RefCell::new(Vec::new()) };
        run_attack(&s.image, &s.objects, &rec, mode, &cfg, &mut substream(4, 0)).unwrap();
        let (mut min_r, mut min_c) = (usize::MAX, usize::MAX);
        for q in rec.seen.borrow().iter() {
            for r in 0..64 {
                for c in 0..64 {
                    if q.pixel(r, c) != s.image.pixel(r, c) {
                        min_r = min_r.min(r);
                        min_c = min_c.min(c);
                    }
                }
            }
        }
        (min_r as f64, min_c as f64)
    };
    let (r, c) = changed_extent(AttackMode::SSPrior);
    assert!(r >= top - dilation && c >= left - dilation, "{r} {c}");
    assert!(top - dilation > 0.0 || left - dilation > 0.0);
    let (r, c) = changed_extent(AttackMode::SquareShaped);
    assert!(r < top - dilation || c < left - dilation);
}

#[test]
fn oracle_failure_aborts_with_partial_state() {
    let det = toy();
    let s = &suite(2, 1, &SceneConfig { jitter: (0.10, 0.20), ..SceneConfig::default() }, det.config())[0];
    let flaky = Flaky { inner: det, calls: Cell::new(0), fail_at: 5 };
    let err = run_attack(&s.image, &s.objects, &flaky, AttackMode::Prfa, &AttackConfig::new(3, 50), &mut substream(0, 0))
        .unwrap_err();
    match err {
        AttackError::Aborted { error, partial } => {
            assert_eq!(error, OracleError::Transport("connection reset".into()));
            assert_eq!(partial.queries_used, 5);
            assert_eq!(partial.trace.len(), 5);
        }
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn invalid_inputs_are_rejected() {
    let (img, gts) = near_threshold_scene();
    let cfg = AttackConfig::new(3, 10);
    let err = run_attack(&img, &[], &toy(), AttackMode::Prfa, &cfg, &mut substream(0, 0));
    assert!(matches!(err, Err(AttackError::Invalid(_))));
    let bad = vec![GroundTruthObject::new(gts[0].bbox, 3)];
    assert!(matches!(run_attack(&img, &bad, &toy(), AttackMode::Prfa, &cfg, &mut substream(0, 0)), Err(AttackError::Invalid(_))));
}

#[test]
fn batch_matches_individual_runs() {
    let det = toy();
    let samples = suite(8, 3, &SceneConfig::default(), det.config());
    let cfg = AttackConfig::new(3, 120);
    let batch = run_batch(&samples, &det, AttackMode::Prfa, &cfg, 42);
    assert_eq!(batch.len(), 3);
    for (i, (s, r)) in samples.iter().zip(&batch).enumerate() {
        let solo = run_attack(&s.image, &s.objects, &det, AttackMode::Prfa, &cfg, &mut substream(42, i as u64)).unwrap();
        assert_eq!(r.as_ref().unwrap(), &solo);
    }
    let one: Vec<Sample> = samples[..1].to_vec();
    assert_eq!(run_batch(&one, &det, AttackMode::Prfa, &cfg, 42)[0], batch[0]);
}
