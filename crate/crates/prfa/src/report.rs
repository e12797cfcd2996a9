//! Run reports, per-image traces and output artifacts.

use std::fs;
use std::path::Path;

use prfa_core::{
    evaluate, AttackError, AttackMode, AttackResult, Detection, EvalReport, GroundTruthObject, Sample,
};
use serde::Serialize;

use crate::io::{perturbation_to_rgb8, save_png, save_rgb8, IoError, ItemError};
use crate::wire::WireDetection;

/// The seven metric columns, under their report names.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MetricColumns {
    #[serde(rename = "mAP")]
    pub map: Option<f64>,
    #[serde(rename = "mAP50")]
    pub map50: Option<f64>,
    #[serde(rename = "mAP75")]
    pub map75: Option<f64>,
    #[serde(rename = "mAP_S")]
    pub map_s: Option<f64>,
    #[serde(rename = "mAP_M")]
    pub map_m: Option<f64>,
    #[serde(rename = "mAP_L")]
    pub map_l: Option<f64>,
    #[serde(rename = "AQ")]
    pub aq: f64,
}

impl From<EvalReport> for MetricColumns {
    fn from(r: EvalReport) -> Self {
        Self {
            map: r.map,
            map50: r.map50,
            map75: r.map75,
            map_s: r.map_small,
            map_m: r.map_medium,
            map_l: r.map_large,
            aq: r.aq,
        }
    }
}

fn finite(v: f64) -> Option<f64> {
    v.is_finite().then_some(v)
}

#[derive(Debug, Clone, Serialize)]
pub struct ImageSummary {
    pub name: String,
    pub queries: usize,
    pub succeeded: bool,
    pub final_objective: Option<f64>,
    /// ℓ∞ norm of the perturbation before 8-bit quantization.
    pub linf: f64,
    pub detections: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct AttackReport {
    #[serde(flatten)]
    pub metrics: MetricColumns,
    pub clean: MetricColumns,
    pub mode: String,
    pub oracle: String,
    pub budget: usize,
    pub seed: u64,
    pub epsilon: f64,
    pub attacked: usize,
    pub success_rate: f64,
    pub mean_final_objective: Option<f64>,
    pub max_linf: f64,
    pub images: Vec<ImageSummary>,
    pub errors: Vec<ItemError>,
}

#[derive(Debug, Clone, Serialize)]
pub struct EvalOutput {
    #[serde(flatten)]
    pub metrics: MetricColumns,
    pub oracle: String,
    pub images: usize,
    pub errors: Vec<ItemError>,
}

#[derive(Debug, Clone, Serialize)]
pub struct TraceEntry {
    pub query: usize,
    pub objective: f64,
    pub accepted: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct TraceFile {
    pub name: String,
    pub mode: String,
    pub queries_used: usize,
    pub succeeded: bool,
    pub best_objective: Option<f64>,
    pub linf: f64,
    pub wall_time_ms: f64,
    pub patches: usize,
    pub flips: usize,
    pub max_parallel: usize,
    pub accepted: usize,
    pub trace: Vec<TraceEntry>,
    pub clean_detections: Vec<WireDetection>,
    pub final_detections: Vec<WireDetection>,
}

impl TraceFile {
    pub fn new(name: &str, mode: AttackMode, r: &AttackResult) -> Self {
        let s = &r.state;
        Self {
            name: name.into(),
            mode: mode.to_string(),
            queries_used: s.queries_used,
            succeeded: s.succeeded,
            best_objective: finite(s.best_objective),
            linf: s.best_perturbation.linf_norm(),
            wall_time_ms: r.wall_time.as_secs_f64() * 1e3,
            patches: s.stats.patches,
            flips: s.stats.flips,
            max_parallel: s.stats.max_parallel,
            accepted: s.stats.accepted,
            trace: s
                .trace
                .iter()
                .map(|t| TraceEntry { query: t.query, objective: t.objective, accepted: t.accepted })
                .collect(),
            clean_detections: r.clean_detections.iter().map(WireDetection::from).collect(),
            final_detections: r.detections.iter().map(WireDetection::from).collect(),
        }
    }
}

pub struct RunInfo<'a> {
    pub mode: AttackMode,
    pub oracle: &'a str,
    pub budget: usize,
    pub seed: u64,
    pub epsilon: f64,
    pub num_classes: usize,
}

/// Aggregates batch results. Aborted attacks are listed but excluded from the metrics.
pub fn build_attack_report(
    info: &RunInfo<'_>,
    samples: &[Sample],
    results: &[Result<AttackResult, AttackError>],
    load_errors: &[ItemError],
) -> Result<AttackReport, prfa_core::Error> {
    let mut clean_preds: Vec<Vec<Detection>> = Vec::new();
    let mut adv_preds: Vec<Vec<Detection>> = Vec::new();
    let mut gts: Vec<Vec<GroundTruthObject>> = Vec::new();
    let mut queries = Vec::new();
    let mut images = Vec::new();
    let mut errors = load_errors.to_vec();
    for (s, r) in samples.iter().zip(results) {
        match r {
            Ok(r) => {
                clean_preds.push(r.clean_detections.clone());
                adv_preds.push(r.detections.clone());
                gts.push(s.objects.clone());
                queries.push(r.state.queries_used);
                images.push(ImageSummary {
                    name: s.name.clone(),
                    queries: r.state.queries_used,
                    succeeded: r.state.succeeded,
                    final_objective: finite(r.state.best_objective),
                    linf: r.state.best_perturbation.linf_norm(),
                    detections: r.detections.len(),
                    error: None,
                });
            }
            Err(e) => {
                let (queries, linf) = match e {
                    AttackError::Aborted { partial, .. } => (partial.queries_used, partial.best_perturbation.linf_norm()),
                    AttackError::Invalid(_) => (0, 0.0),
                };
                images.push(ImageSummary {
                    name: s.name.clone(),
                    queries,
                    succeeded: false,
                    final_objective: None,
                    linf,
                    detections: 0,
                    error: Some(e.to_string()),
                });
                errors.push(ItemError { name: s.name.clone(), message: e.to_string() });
            }
        }
    }
    let metrics = evaluate(&adv_preds, &gts, info.num_classes, &queries)?;
    let clean = evaluate(&clean_preds, &gts, info.num_classes, &vec![1; gts.len()])?;
    let ok: Vec<&ImageSummary> = images.iter().filter(|i| i.error.is_none()).collect();
    let objectives: Vec<f64> = ok.iter().filter_map(|i| i.final_objective).collect();
    Ok(AttackReport {
        metrics: metrics.into(),
        clean: clean.into(),
        mode: info.mode.to_string(),
        oracle: info.oracle.into(),
        budget: info.budget,
        seed: info.seed,
        epsilon: info.epsilon,
        attacked: ok.len(),
        success_rate: ok.iter().filter(|i| i.succeeded).count() as f64 / ok.len().max(1) as f64,
        mean_final_objective: (!objectives.is_empty())
            .then(|| objectives.iter().sum::<f64>() / objectives.len() as f64),
        max_linf: images.iter().fold(0.0, |m, i| m.max(i.linf)),
        images,
        errors,
    })
}

pub fn to_json<T: Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("report serializes") + "\n"
}

fn write(path: &Path, text: &str) -> Result<(), IoError> {
    fs::write(path, text).map_err(|source| IoError::File { path: path.to_path_buf(), source })
}

/// Writes `adv/`, `delta/`, `trace/` and `report.json` under `out`.
pub fn write_attack_outputs(
    out: &Path,
    mode: AttackMode,
    epsilon: f64,
    samples: &[Sample],
    results: &[Result<AttackResult, AttackError>],
    report: &AttackReport,
) -> Result<(), IoError> {
    for sub in ["adv", "delta", "trace"] {
        let dir = out.join(sub);
        fs::create_dir_all(&dir).map_err(|source| IoError::File { path: dir, source })?;
    }
    for (s, r) in samples.iter().zip(results) {
        let Ok(r) = r else { continue };
        save_png(&r.adversarial, &out.join("adv").join(format!("{}.png", s.name)))?;
        save_rgb8(
            &perturbation_to_rgb8(&r.state.best_perturbation, epsilon),
            &out.join("delta").join(format!("{}.png", s.name)),
        )?;
        write(&out.join("trace").join(format!("{}.json", s.name)), &to_json(&TraceFile::new(&s.name, mode, r)))?;
    }
    write(&out.join("report.json"), &to_json(report))
}
