//! The attack driver: prior-guided random search over square and
//! rectangle-flip patches, with optional parallel patches per query.

use alloc::boxed::Box;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;
use core::time::Duration;

use rand::RngCore;

use crate::error::{Error, OracleError};
use crate::image::Image;
use crate::objective::{attack_succeeded, objective_h, Detection, GroundTruthObject, ObjectiveConfig};
use crate::oracle::DetectorOracle;
use crate::perturbation::{apply_and_project, flip_half, sample_square, Patch, ScheduleConfig};
use crate::prior::{default_dilation, SearchMask};
use crate::substream;

/// Which search components are enabled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AttackMode {
    /// Square patches anywhere in the image.
    SquareShaped,
    /// Square patches inside the predicted-box prior.
    SSPrior,
    /// Prior plus rectangle flips.
    SSPriorFlip,
    /// Prior plus parallel patches.
    SSPriorParallel,
    /// Prior, flips and parallel patches.
    Prfa,
}

impl AttackMode {
    pub const ALL: [AttackMode; 5] =
        [AttackMode::SquareShaped, AttackMode::SSPrior, AttackMode::SSPriorFlip, AttackMode::SSPriorParallel, AttackMode::Prfa];

    pub fn uses_prior(self) -> bool {
        self != AttackMode::SquareShaped
    }

    pub fn uses_flip(self) -> bool {
        matches!(self, AttackMode::SSPriorFlip | AttackMode::Prfa)
    }

    pub fn uses_parallel(self) -> bool {
        matches!(self, AttackMode::SSPriorParallel | AttackMode::Prfa)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            AttackMode::SquareShaped => "ss",
            AttackMode::SSPrior => "ss-prior",
            AttackMode::SSPriorFlip => "ss-prior-flip",
            AttackMode::SSPriorParallel => "ss-prior-parallel",
            AttackMode::Prfa => "prfa",
        }
    }
}

impl fmt::Display for AttackMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AttackMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        AttackMode::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::InvalidInput(alloc::format!("unknown attack mode `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttackConfig {
    pub objective: ObjectiveConfig,
    pub schedule: ScheduleConfig,
    /// Maximum oracle queries per image, the clean query included.
    pub budget: usize,
    /// Prior margin in pixels; `None` uses 10% of `sqrt(w * h)`.
    pub dilation: Option<usize>,
}

impl AttackConfig {
    pub fn new(num_classes: usize, budget: usize) -> Self {
        Self { objective: ObjectiveConfig::new(num_classes), schedule: ScheduleConfig::default(), budget, dilation: None }
    }

    pub fn validate(&self) -> Result<(), Error> {
        self.objective.validate()?;
        self.schedule.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TracePoint {
    pub query: usize,
    /// Best objective after this query.
    pub objective: f64,
    pub accepted: bool,
}

/// Instrumentation counters.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct AttackStats {
    pub patches: usize,
    pub flips: usize,
    pub max_parallel: usize,
    pub accepted: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttackState {
    pub best_perturbation: Image,
    /// `+inf` until the clean query has been answered.
    pub best_objective: f64,
    pub queries_used: usize,
    pub succeeded: bool,
    pub trace: Vec<TracePoint>,
    pub stats: AttackStats,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttackResult {
    pub adversarial: Image,
    /// Detections on `adversarial`; empty when no query was made.
    pub detections: Vec<Detection>,
    /// Detections on the clean image (query 0).
    pub clean_detections: Vec<Detection>,
    pub state: AttackState,
    /// Left at zero here; timed by callers that have a clock.
    pub wall_time: Duration,
}

#[derive(Debug, Clone, PartialEq)]
pub enum AttackError {
    Invalid(Error),
    /// The oracle failed mid-attack; `partial` holds the state reached so far.
    Aborted { error: OracleError, partial: Box<AttackState> },
}

impl fmt::Display for AttackError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AttackError::Invalid(e) => write!(f, "{e}"),
            AttackError::Aborted { error, partial } => {
                write!(f, "attack aborted after {} queries: {error}", partial.queries_used)
            }
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for AttackError {}

impl From<Error> for AttackError {
    fn from(e: Error) -> Self {
        AttackError::Invalid(e)
    }
}

struct Run<'a, O: ?Sized, R: ?Sized> {
    clean: &'a Image,
    gts: &'a [GroundTruthObject],
    oracle: &'a O,
    mode: AttackMode,
    cfg: &'a AttackConfig,
    rng: &'a mut R,
    fixed_prior: Option<&'a SearchMask>,
    state: AttackState,
}

impl<O: DetectorOracle + ?Sized, R: RngCore + ?Sized> Run<'_, O, R> {
    fn abort(&self, error: OracleError) -> AttackError {
        AttackError::Aborted { error, partial: Box::new(self.state.clone()) }
    }

    /// One oracle query; returns the detections and their objective.
    fn query(&mut self, image: &Image) -> Result<(Vec<Detection>, f64), AttackError> {
        let dets = self.oracle.detect(image).map_err(|e| self.abort(e))?;
        self.state.queries_used += 1;
        let h = objective_h(&dets, self.gts, &self.cfg.objective)
            .map_err(|e| self.abort(OracleError::Validation(alloc::format!("{e}"))))?;
        Ok((dets, h))
    }

    fn mask_for(&self, dets: &[Detection]) -> SearchMask {
        let (w, h) = self.clean.dims();
        if !self.mode.uses_prior() {
            return SearchMask::full(w, h);
        }
        if let Some(mask) = self.fixed_prior {
            return mask.clone();
        }
        let dilation = self.cfg.dilation.unwrap_or_else(|| default_dilation(w, h));
        let boxes: Vec<_> = dets.iter().map(|d| d.bbox).collect();
        SearchMask::from_boxes(&boxes, dilation, w, h)
    }

    fn propose(&mut self, q: usize, mask: &SearchMask) -> Result<Vec<Patch>, AttackError> {
        let (w, h) = self.clean.dims();
        let schedule = &self.cfg.schedule;
        let side = schedule.side_at(q, w, h).min(w).min(h);
        let count = if self.mode.uses_parallel() { schedule.parallel_at(q) } else { 1 };
        self.state.stats.max_parallel = self.state.stats.max_parallel.max(count);
        let mut patches = Vec::with_capacity(count);
        for _ in 0..count {
            let (row, col) = mask.sample_origin(side, self.rng)?;
            let mut patch = sample_square(self.rng, side, schedule.epsilon);
            if self.mode.uses_flip() {
                patch = flip_half(patch, self.rng);
                self.state.stats.flips += 1;
            }
            patches.push(patch.placed(row, col));
        }
        self.state.stats.patches += count;
        Ok(patches)
    }

    fn execute(mut self) -> Result<AttackResult, AttackError> {
        let budget = self.cfg.budget;
        if budget == 0 {
            return Ok(AttackResult {
                adversarial: self.clean.clone(),
                detections: Vec::new(),
                clean_detections: Vec::new(),
                state: self.state,
                wall_time: Duration::ZERO,
            });
        }
        let (mut best_dets, h0) = self.query(self.clean)?;
        let clean_detections = best_dets.clone();
        let mut adversarial = self.clean.clone();
        self.state.best_objective = h0;
        self.state.trace.push(TracePoint { query: 0, objective: h0, accepted: true });
        self.state.succeeded = attack_succeeded(&best_dets, self.gts, &self.cfg.objective);
        let mut mask = self.mask_for(&best_dets);
        let eps = self.cfg.schedule.epsilon;

        let mut q = 1;
        while q < budget && !self.state.succeeded {
            let patches = self.propose(q, &mask)?;
            let (candidate, delta) = apply_and_project(self.clean, &self.state.best_perturbation, &patches, eps)?;
            let (dets, h) = self.query(&candidate)?;
            // Ties are rejected.
            let accepted = h < self.state.best_objective;
            if accepted {
                self.state.best_objective = h;
                self.state.best_perturbation = delta;
                self.state.stats.accepted += 1;
                self.state.succeeded = attack_succeeded(&dets, self.gts, &self.cfg.objective);
                if self.fixed_prior.is_none() && !dets.is_empty() {
                    mask = self.mask_for(&dets);
                }
                best_dets = dets;
                adversarial = candidate;
            }
            self.state.trace.push(TracePoint { query: q, objective: self.state.best_objective, accepted });
            q += 1;
        }
        Ok(AttackResult {
            adversarial,
            detections: best_dets,
            clean_detections,
            state: self.state,
            wall_time: Duration::ZERO,
        })
    }
}

/// Attacks one image until success or until `cfg.budget` queries are spent.
///
/// Query 0 is the clean image; it seeds the prior region and the best
/// objective. Every later query evaluates one candidate built from the best
/// perturbation so far plus this iteration's patches, and the candidate
/// replaces the best only when it strictly lowers the objective. The loop
/// stops as soon as the best state satisfies [`attack_succeeded`].
pub fn run_attack<O, R>(
    clean: &Image,
    gts: &[GroundTruthObject],
    oracle: &O,
    mode: AttackMode,
    cfg: &AttackConfig,
    rng: &mut R,
) -> Result<AttackResult, AttackError>
where
    O: DetectorOracle + ?Sized,
    R: RngCore + ?Sized,
{
    run_attack_with_prior(clean, gts, oracle, mode, cfg, None, rng)
}

/// [`run_attack`] with an optional externally supplied objectness mask.
///
/// When `prior` is given, prior-guided modes sample inside it for the whole
/// attack instead of deriving the region from the detector's boxes.
pub fn run_attack_with_prior<O, R>(
    clean: &Image,
    gts: &[GroundTruthObject],
    oracle: &O,
    mode: AttackMode,
    cfg: &AttackConfig,
    prior: Option<&SearchMask>,
    rng: &mut R,
) -> Result<AttackResult, AttackError>
where
    O: DetectorOracle + ?Sized,
    R: RngCore + ?Sized,
{
    cfg.validate()?;
    if gts.is_empty() {
        return Err(Error::InvalidInput("an attack needs at least one ground-truth object".into()).into());
    }
    if let Some(g) = gts.iter().find(|g| g.label >= cfg.objective.num_classes) {
        return Err(Error::LabelOutOfRange { label: g.label, num_classes: cfg.objective.num_classes }.into());
    }
    let (w, h) = clean.dims();
    if let Some(m) = prior {
        if (m.width(), m.height()) != (w, h) {
            return Err(Error::DimensionMismatch { expected: (w, h), found: (m.width(), m.height()) }.into());
        }
    }
    let state = AttackState {
        best_perturbation: Image::zeros(w, h),
        best_objective: f64::INFINITY,
        queries_used: 0,
        succeeded: false,
        trace: Vec::new(),
        stats: AttackStats::default(),
    };
    Run { clean, gts, oracle, mode, cfg, rng, fixed_prior: prior, state }.execute()
}

/// One dataset entry: a clean image with its annotations.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub name: alloc::string::String,
    pub image: Image,
    pub objects: Vec<GroundTruthObject>,
    /// External objectness mask, if one was supplied.
    pub prior: Option<SearchMask>,
}

impl Sample {
    pub fn new(name: impl Into<alloc::string::String>, image: Image, objects: Vec<GroundTruthObject>) -> Self {
        Self { name: name.into(), image, objects, prior: None }
    }
}

/// Attacks entry `index` of a batch on its own random substream.
pub fn attack_sample<O: DetectorOracle + ?Sized>(
    sample: &Sample,
    index: usize,
    oracle: &O,
    mode: AttackMode,
    cfg: &AttackConfig,
    master_seed: u64,
) -> Result<AttackResult, AttackError> {
    let mut rng = substream(master_seed, index as u64);
    run_attack_with_prior(&sample.image, &sample.objects, oracle, mode, cfg, sample.prior.as_ref(), &mut rng)
}

/// Attacks every sample independently, in order. Failures stay per item.
pub fn run_batch<O: DetectorOracle + ?Sized>(
    samples: &[Sample],
    oracle: &O,
    mode: AttackMode,
    cfg: &AttackConfig,
    master_seed: u64,
) -> Vec<Result<AttackResult, AttackError>> {
    samples
        .iter()
        .enumerate()
        .map(|(i, s)| attack_sample(s, i, oracle, mode, cfg, master_seed))
        .collect()
}
