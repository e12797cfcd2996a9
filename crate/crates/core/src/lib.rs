//! Query-based black-box attack engine for object detectors.
//!
//! The engine only observes what a deployed detector returns after NMS: boxes,
//! a top-1 label and its score. It searches an ℓ∞-bounded perturbation with
//! random square patches placed inside a prior region, optionally applying
//! several patches per query and flipping half of each patch's sign.
//!
//! Everything in this crate is pure computation over in-memory buffers and
//! builds without `std`; file formats, HTTP and the CLI live in the `prfa`
//! crate.
#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod error;
pub mod geometry;
pub mod image;
pub mod metrics;
pub mod objective;
pub mod oracle;
pub mod perturbation;
pub mod prior;
pub mod search;
pub mod synthetic;

pub use error::{Error, OracleError};
pub use geometry::{area, iou, BBox};
pub use image::Image;
pub use metrics::{average_precision, evaluate, EvalReport};
pub use objective::{attack_succeeded, objective_h, Detection, GroundTruthObject, ObjectiveConfig};
pub use oracle::{nms, DetectorOracle, OracleInfo, ToyDetector, ToyDetectorConfig};
pub use perturbation::{apply_and_project, flip_half, sample_square, FlipOrientation, Patch, ScheduleConfig};
pub use prior::SearchMask;
pub use search::{
    attack_sample, run_attack, run_attack_with_prior, run_batch, AttackConfig, AttackError, AttackMode, AttackResult,
    AttackState, AttackStats, Sample, TracePoint,
};

/// Random stream used throughout the engine.
pub type Rng = rand_chacha::ChaCha8Rng;

/// Seeds a stream for item `index` of a run with `master` seed.
///
/// Streams for different indices never overlap, so per-image results do not
/// depend on how items are scheduled across workers.
pub fn substream(master: u64, index: u64) -> Rng {
    use rand::SeedableRng;
    let mut rng = Rng::seed_from_u64(master);
    rng.set_stream(index);
    rng
}
