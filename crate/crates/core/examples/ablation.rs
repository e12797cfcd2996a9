//! Runs every attack mode over a synthetic suite and prints summary columns.
//!
//! `cargo run --release -p prfa-core --example ablation -- [images] [budget] [seed]`

use prfa_core::synthetic::{suite, SceneConfig};
use prfa_core::{evaluate, run_batch, AttackConfig, AttackMode, ToyDetector, ToyDetectorConfig};

fn main() {
    let args: Vec<u64> = std::env::args().skip(1).map(|a| a.parse().expect("numeric argument")).collect();
    let images = args.first().copied().unwrap_or(20) as usize;
    let budget = args.get(1).copied().unwrap_or(2000) as usize;
    let seed = args.get(2).copied().unwrap_or(7);
    let toy = ToyDetector::new(ToyDetectorConfig::default()).unwrap();
    let samples = suite(seed, images, &SceneConfig::default(), toy.config());
    let cfg = AttackConfig::new(3, budget);
    let gts: Vec<_> = samples.iter().map(|s| s.objects.clone()).collect();
    println!("{:<18} {:>10} {:>8} {:>8} {:>8}", "mode", "mean_obj", "success", "AQ", "mAP50");
    for mode in AttackMode::ALL {
        let results: Vec<_> = run_batch(&samples, &toy, mode, &cfg, seed).into_iter().map(Result::unwrap).collect();
        let preds: Vec<_> = results.iter().map(|r| r.detections.clone()).collect();
        let queries: Vec<_> = results.iter().map(|r| r.state.queries_used).collect();
        let report = evaluate(&preds, &gts, 3, &queries).unwrap();
        let mean_obj = results.iter().map(|r| r.state.best_objective).sum::<f64>() / results.len() as f64;
        let success = results.iter().filter(|r| r.state.succeeded).count() as f64 / results.len() as f64;
        println!(
            "{:<18} {:>10.4} {:>8.2} {:>8.1} {:>8.3}",
            mode.as_str(),
            mean_obj,
            success,
            report.aq,
            report.map50.unwrap_or(f64::NAN)
        );
    }
}
