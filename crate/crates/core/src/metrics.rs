//! COCO-style detection metrics and attack query efficiency.

use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Ordering;
use core::ops::Range;

use crate::error::Error;
use crate::geometry::iou;
use crate::objective::{Detection, GroundTruthObject};

/// Ground-truth area ranges for the size-split columns.
pub const AREA_SMALL: Range<f64> = 0.0..32.0 * 32.0;
pub const AREA_MEDIUM: Range<f64> = 32.0 * 32.0..96.0 * 96.0;
pub const AREA_LARGE: Range<f64> = 96.0 * 96.0..f64::INFINITY;

/// IoU thresholds 0.50, 0.55, ..., 0.95.
pub fn coco_thresholds() -> impl Iterator<Item = f64> {
    (0..10).map(|i| 0.5 + 0.05 * i as f64)
}

/// One column set of a detection report. `None` marks an undefined column
/// (no ground truth falls in its class or size bucket).
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct EvalReport {
    pub map: Option<f64>,
    pub map50: Option<f64>,
    pub map75: Option<f64>,
    pub map_small: Option<f64>,
    pub map_medium: Option<f64>,
    pub map_large: Option<f64>,
    /// Mean oracle queries per image.
    pub aq: f64,
}

#[derive(Clone, Copy)]
struct Ranked {
    image: usize,
    index: usize,
    score: f64,
}

/// Precision-envelope area under the PR curve of a ranked TP/FP sequence.
pub fn envelope_ap(is_tp: &[bool], num_positives: usize) -> f64 {
    if num_positives == 0 {
        return 0.0;
    }
    let mut tp = 0usize;
    let mut points = Vec::with_capacity(is_tp.len());
    for (k, &hit) in is_tp.iter().enumerate() {
        tp += usize::from(hit);
        points.push((tp as f64 / num_positives as f64, tp as f64 / (k + 1) as f64));
    }
    for i in (0..points.len().saturating_sub(1)).rev() {
        points[i].1 = points[i].1.max(points[i + 1].1);
    }
    let mut ap = 0.0;
    let mut prev_recall = 0.0;
    for (recall, precision) in points {
        ap += (recall - prev_recall) * precision;
        prev_recall = recall;
    }
    ap
}

fn ap_in_range(
    preds: &[Vec<Detection>],
    gts: &[Vec<GroundTruthObject>],
    class: usize,
    iou_thresh: f64,
    area: &Range<f64>,
) -> Option<f64> {
    let in_range = |a: f64| area.contains(&a);
    let num_positives = gts.iter().flatten().filter(|g| g.label == class && in_range(g.bbox.area())).count();
    if num_positives == 0 {
        return None;
    }
    let mut ranked: Vec<Ranked> = preds
        .iter()
        .enumerate()
        .flat_map(|(image, ds)| {
            ds.iter().enumerate().filter(|(_, d)| d.label == class).map(move |(index, d)| Ranked {
                image,
                index,
                score: d.score,
            })
        })
        .collect();
    // Stable: equal scores keep dataset order.
    ranked.sort_by(|a, b| b.score.partial_cmp(&a.score).unwrap_or(Ordering::Equal));

    let mut taken: Vec<Vec<bool>> = gts.iter().map(|g| vec![false; g.len()]).collect();
    let mut is_tp = Vec::with_capacity(ranked.len());
    for r in ranked {
        let det = &preds[r.image][r.index];
        let objects = gts.get(r.image).map(Vec::as_slice).unwrap_or(&[]);
        let best = |want_regular: bool| {
            objects
                .iter()
                .enumerate()
                .filter(|&(m, g)| g.label == class && !taken[r.image][m] && in_range(g.bbox.area()) == want_regular)
                .map(|(m, g)| (m, iou(&det.bbox, &g.bbox)))
                .filter(|&(_, v)| v >= iou_thresh)
                .fold(None, |acc: Option<(usize, f64)>, cur| match acc {
                    Some(a) if a.1 >= cur.1 => Some(a),
                    _ => Some(cur),
                })
        };
        if let Some((m, _)) = best(true) {
            taken[r.image][m] = true;
            is_tp.push(true);
        } else if let Some((m, _)) = best(false) {
            // Matched an out-of-range object: neither TP nor FP.
            taken[r.image][m] = true;
        } else if in_range(det.bbox.area()) {
            is_tp.push(false);
        }
    }
    Some(envelope_ap(&is_tp, num_positives))
}

/// Average precision for `class` at one IoU threshold over a dataset.
///
/// `preds[i]` and `gts[i]` belong to image `i`. Predictions are ranked by
/// score and matched greedily to the unmatched same-class object of highest
/// IoU. Returns `None` when the class has no ground truth.
pub fn average_precision(
    preds: &[Vec<Detection>],
    gts: &[Vec<GroundTruthObject>],
    class: usize,
    iou_thresh: f64,
) -> Option<f64> {
    ap_in_range(preds, gts, class, iou_thresh, &(0.0..f64::INFINITY))
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

fn map_at(
    preds: &[Vec<Detection>],
    gts: &[Vec<GroundTruthObject>],
    num_classes: usize,
    thresholds: &[f64],
    area: &Range<f64>,
) -> Option<f64> {
    let per_threshold: Vec<f64> = thresholds
        .iter()
        .filter_map(|&t| mean((0..num_classes).filter_map(|c| ap_in_range(preds, gts, c, t, area))))
        .collect();
    mean(per_threshold.into_iter())
}

/// Full report over a dataset; `queries[i]` is the oracle queries spent on image `i`.
pub fn evaluate(
    preds: &[Vec<Detection>],
    gts: &[Vec<GroundTruthObject>],
    num_classes: usize,
    queries: &[usize],
) -> Result<EvalReport, Error> {
    if gts.is_empty() {
        return Err(Error::InvalidInput("cannot evaluate an empty dataset".into()));
    }
    if preds.len() != gts.len() || queries.len() != gts.len() {
        return Err(Error::InvalidInput(alloc::format!(
            "{} prediction sets and {} query counts for {} images",
            preds.len(),
            queries.len(),
            gts.len()
        )));
    }
    let all: Vec<f64> = coco_thresholds().collect();
    let any = 0.0..f64::INFINITY;
    Ok(EvalReport {
        map: map_at(preds, gts, num_classes, &all, &any),
        map50: map_at(preds, gts, num_classes, &[0.5], &any),
        map75: map_at(preds, gts, num_classes, &[0.75], &any),
        map_small: map_at(preds, gts, num_classes, &all, &AREA_SMALL),
        map_medium: map_at(preds, gts, num_classes, &all, &AREA_MEDIUM),
        map_large: map_at(preds, gts, num_classes, &all, &AREA_LARGE),
        aq: queries.iter().sum::<usize>() as f64 / queries.len() as f64,
    })
}
