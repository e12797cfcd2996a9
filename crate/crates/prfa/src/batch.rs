//! Multi-threaded batch attacks.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use prfa_core::{attack_sample, AttackConfig, AttackError, AttackMode, AttackResult, DetectorOracle, Sample};

/// Attacks every sample on up to `workers` threads.
///
/// Results come back in input order and match a serial
/// [`prfa_core::run_batch`] with the same seed, apart from `wall_time`.
pub fn run_batch_parallel<O>(
    samples: &[Sample],
    oracle: &O,
    mode: AttackMode,
    cfg: &AttackConfig,
    master_seed: u64,
    workers: usize,
) -> Vec<Result<AttackResult, AttackError>>
where
    O: DetectorOracle + Sync + ?Sized,
{
    let next = AtomicUsize::new(0);
    let slots: Vec<Mutex<Option<Result<AttackResult, AttackError>>>> =
        samples.iter().map(|_| Mutex::new(None)).collect();
    std::thread::scope(|scope| {
        for _ in 0..workers.clamp(1, samples.len().max(1)) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(sample) = samples.get(i) else { break };
                let start = Instant::now();
                let result = attack_sample(sample, i, oracle, mode, cfg, master_seed).map(|mut r| {
                    r.wall_time = start.elapsed();
                    r
                });
                *slots[i].lock().expect("result slot") = Some(result);
            });
        }
    });
    slots.into_iter().map(|s| s.into_inner().expect("result slot").expect("every sample attacked")).collect()
}

/// Default worker count: the available parallelism.
pub fn default_workers() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}
