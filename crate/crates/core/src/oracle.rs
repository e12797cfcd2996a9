//! Detector oracles: the query interface and a deterministic toy detector.
//!
//! The toy detector classifies pixels by colour, scores sliding windows by
//! their per-class fill fraction, and runs greedy per-class NMS. Suppressing
//! its top window can promote a rival that NMS had hidden, which is the same
//! failure mode real two-stage detectors show under attack.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Ordering;

use crate::error::{Error, OracleError};
use crate::geometry::{iou, BBox};
use crate::image::Image;
use crate::objective::Detection;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OracleInfo {
    pub num_classes: usize,
    pub name: String,
}

/// Anything that maps an image to post-NMS detections.
///
/// Implementations must tolerate concurrent queries on different images.
pub trait DetectorOracle {
    fn detect(&self, image: &Image) -> Result<Vec<Detection>, OracleError>;
    fn info(&self) -> OracleInfo;
}

impl<O: DetectorOracle + ?Sized> DetectorOracle for &O {
    fn detect(&self, image: &Image) -> Result<Vec<Detection>, OracleError> {
        (**self).detect(image)
    }

    fn info(&self) -> OracleInfo {
        (**self).info()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ToyDetectorConfig {
    pub class_colors: Vec<[f64; 3]>,
    /// A pixel belongs to a class when its ℓ∞ colour distance is below this.
    pub color_tolerance: f64,
    pub window_sizes: Vec<usize>,
    pub stride: usize,
    /// Minimum fill fraction for a window to become a candidate.
    pub fill_threshold: f64,
    pub nms_iou: f64,
}

impl Default for ToyDetectorConfig {
    fn default() -> Self {
        Self {
            class_colors: vec![[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
            color_tolerance: 0.3,
            window_sizes: vec![16, 24, 32],
            stride: 4,
            fill_threshold: 0.5,
            nms_iou: 0.5,
        }
    }
}

impl ToyDetectorConfig {
    pub fn validate(&self) -> Result<(), Error> {
        let bad = |m: &str| Err(Error::InvalidInput(m.into()));
        if self.class_colors.is_empty() {
            return bad("toy detector needs at least one class colour");
        }
        if self.window_sizes.is_empty() || self.window_sizes.contains(&0) {
            return bad("window sizes must be non-empty and positive");
        }
        if self.stride == 0 {
            return bad("stride must be positive");
        }
        if !(self.fill_threshold > 0.0 && self.fill_threshold < 1.0) {
            return bad("fill threshold must lie in (0, 1)");
        }
        if !(self.nms_iou > 0.0 && self.nms_iou < 1.0) {
            return bad("NMS IoU must lie in (0, 1)");
        }
        if !(self.color_tolerance > 0.0) {
            return bad("colour tolerance must be positive");
        }
        Ok(())
    }

    /// Nearest class whose colour lies within tolerance, if any.
    pub fn classify(&self, rgb: [f64; 3]) -> Option<usize> {
        let mut best: Option<(usize, f64)> = None;
        for (k, color) in self.class_colors.iter().enumerate() {
            let d = (0..3).fold(0.0f64, |m, ch| m.max((rgb[ch] - color[ch]).abs()));
            if d < self.color_tolerance && best.map_or(true, |(_, bd)| d < bd) {
                best = Some((k, d));
            }
        }
        best.map(|(k, _)| k)
    }
}

/// Orders detections by descending score, then top row, left column and
/// smaller size, then label.
pub fn detection_order(a: &Detection, b: &Detection) -> Ordering {
    b.score
        .partial_cmp(&a.score)
        .unwrap_or(Ordering::Equal)
        .then(a.bbox.y1.partial_cmp(&b.bbox.y1).unwrap_or(Ordering::Equal))
        .then(a.bbox.x1.partial_cmp(&b.bbox.x1).unwrap_or(Ordering::Equal))
        .then(a.bbox.area().partial_cmp(&b.bbox.area()).unwrap_or(Ordering::Equal))
        .then(a.label.cmp(&b.label))
}

/// Greedy per-class non-maximum suppression.
///
/// Candidates are visited in [`detection_order`]; a candidate survives unless a
/// kept candidate of the same class overlaps it with IoU ≥ `iou_thresh`.
/// Survivors come back in the same order.
pub fn nms(cands: &[Detection], iou_thresh: f64) -> Vec<Detection> {
    let mut sorted = cands.to_vec();
    sorted.sort_by(detection_order);
    let mut kept: Vec<Detection> = Vec::new();
    for c in sorted {
        let suppressed = kept.iter().any(|k| k.label == c.label && iou(&k.bbox, &c.bbox) >= iou_thresh);
        if !suppressed {
            kept.push(c);
        }
    }
    kept
}

/// Colour-fill sliding-window detector.
#[derive(Debug, Clone)]
pub struct ToyDetector {
    cfg: ToyDetectorConfig,
}

impl ToyDetector {
    pub fn new(cfg: ToyDetectorConfig) -> Result<Self, Error> {
        cfg.validate()?;
        Ok(Self { cfg })
    }

    pub fn config(&self) -> &ToyDetectorConfig {
        &self.cfg
    }

    /// Per-class pixel labels, row-major.
    pub fn label_map(&self, image: &Image) -> Vec<Option<usize>> {
        let (w, h) = image.dims();
        (0..h).flat_map(|r| (0..w).map(move |c| (r, c))).map(|(r, c)| self.cfg.classify(image.pixel(r, c))).collect()
    }

    /// Every window passing the fill threshold, before NMS.
    ///
    /// Window sizes larger than the image are skipped.
    pub fn candidates(&self, image: &Image) -> Vec<Detection> {
        let (w, h) = image.dims();
        let classes = self.cfg.class_colors.len();
        let labels = self.label_map(image);
        // Summed-area tables, one (h+1) x (w+1) plane per class.
        let stride = w + 1;
        let mut sat = vec![0u32; classes * (h + 1) * stride];
        for k in 0..classes {
            let plane = &mut sat[k * (h + 1) * stride..(k + 1) * (h + 1) * stride];
            for r in 0..h {
                let mut run = 0u32;
                for c in 0..w {
                    run += u32::from(labels[r * w + c] == Some(k));
                    plane[(r + 1) * stride + c + 1] = plane[r * stride + c + 1] + run;
                }
            }
        }
        let count = |k: usize, r: usize, c: usize, s: usize| {
            let p = &sat[k * (h + 1) * stride..];
            p[(r + s) * stride + c + s] + p[r * stride + c] - p[r * stride + c + s] - p[(r + s) * stride + c]
        };
        let mut out = Vec::new();
        let mut fills = vec![0.0f64; classes];
        for &s in &self.cfg.window_sizes {
            if s > w || s > h {
                continue;
            }
            let denom = (s * s) as f64;
            for r in (0..=h - s).step_by(self.cfg.stride) {
                for c in (0..=w - s).step_by(self.cfg.stride) {
                    for (k, f) in fills.iter_mut().enumerate() {
                        *f = f64::from(count(k, r, c, s)) / denom;
                    }
                    for k in 0..classes {
                        if fills[k] < self.cfg.fill_threshold {
                            continue;
                        }
                        let runner_up = fills
                            .iter()
                            .enumerate()
                            .filter(|&(j, _)| j != k)
                            .fold(0.0f64, |m, (_, &v)| m.max(v))
                            .min(fills[k]);
                        out.push(Detection::new(BBox::square(r, c, s), k, fills[k]).with_score2(runner_up));
                    }
                }
            }
        }
        out
    }

    pub fn detect_image(&self, image: &Image) -> Vec<Detection> {
        nms(&self.candidates(image), self.cfg.nms_iou)
    }
}

impl DetectorOracle for ToyDetector {
    fn detect(&self, image: &Image) -> Result<Vec<Detection>, OracleError> {
        Ok(self.detect_image(image))
    }

    fn info(&self) -> OracleInfo {
        OracleInfo { num_classes: self.cfg.class_colors.len(), name: "toy-color-fill".into() }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn det(x1: f64, y1: f64, x2: f64, y2: f64, label: usize, score: f64) -> Detection {
        Detection::new(BBox::new(x1, y1, x2, y2), label, score)
    }

    #[test]
    fn overlapping_same_class_is_suppressed() {
        // IoU = 90 / 100 = 0.9.
        let a = det(0.0, 0.0, 10.0, 10.0, 0, 0.9);
        let b = det(0.0, 1.0, 10.0, 10.0, 0, 0.8);
        assert_eq!(nms(&[b, a], 0.5), vec![a]);
    }

    #[test]
    fn low_overlap_and_other_class_survive() {
        // IoU = 50 / 150.
        let a = det(0.0, 0.0, 10.0, 10.0, 0, 0.9);
        let b = det(5.0, 0.0, 15.0, 10.0, 0, 0.8);
        assert_eq!(nms(&[a, b], 0.5).len(), 2);
        let c = det(0.0, 0.0, 10.0, 10.0, 1, 0.8);
        assert_eq!(nms(&[a, c], 0.5).len(), 2);
    }

    #[test]
    fn ties_prefer_top_left_then_smaller() {
        let far = det(4.0, 0.0, 20.0, 16.0, 0, 1.0);
        let near = det(0.0, 0.0, 16.0, 16.0, 0, 1.0);
        let big = det(0.0, 0.0, 24.0, 24.0, 0, 1.0);
        assert_eq!(nms(&[far, big, near], 0.5)[0], near);
    }

    #[test]
    fn classify_picks_nearest_within_tolerance() {
        let cfg = ToyDetectorConfig::default();
        assert_eq!(cfg.classify([0.8, 0.1, 0.0]), Some(0));
        assert_eq!(cfg.classify([0.7, 0.0, 0.0]), None);
        assert_eq!(cfg.classify([0.0, 0.0, 0.0]), None);
        assert_eq!(cfg.classify([0.1, 0.1, 0.95]), Some(2));
    }

    #[test]
    fn blank_image_yields_nothing() {
        let d = ToyDetector::new(ToyDetectorConfig::default()).unwrap();
        assert!(d.detect_image(&Image::zeros(64, 64)).is_empty());
    }

    #[test]
    fn oversized_windows_are_skipped() {
        let d = ToyDetector::new(ToyDetectorConfig::default()).unwrap();
        let img = Image::filled(20, 20, [1.0, 0.0, 0.0]);
        let dets = d.detect_image(&img);
        assert!(dets.iter().all(|x| x.bbox.width() == 16.0));
        assert_eq!(dets[0].bbox, BBox::square(0, 0, 16));
    }

    #[test]
    fn config_validation() {
        let mut cfg = ToyDetectorConfig::default();
        cfg.fill_threshold = 1.0;
        assert!(ToyDetector::new(cfg).is_err());
        let cfg = ToyDetectorConfig { stride: 0, ..Default::default() };
        assert!(cfg.validate().is_err());
    }
}
