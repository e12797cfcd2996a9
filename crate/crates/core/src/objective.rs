//! Attack loss over detector outputs and the untargeted success predicate.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::Error;
use crate::geometry::{iou, BBox};

/// One post-NMS detector output.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Detection {
    pub bbox: BBox,
    pub label: usize,
    /// Top-1 class probability.
    pub score: f64,
    /// Second-best class probability, when the oracle exposes it.
    pub score2: Option<f64>,
}

impl Detection {
    pub fn new(bbox: BBox, label: usize, score: f64) -> Self {
        Self { bbox, label, score, score2: None }
    }

    pub fn with_score2(mut self, score2: f64) -> Self {
        self.score2 = Some(score2);
        self
    }

    /// Checks score ranges, box validity and the label bound.
    pub fn validate(&self, num_classes: usize) -> Result<(), Error> {
        if self.label >= num_classes {
            return Err(Error::LabelOutOfRange { label: self.label, num_classes });
        }
        if !self.bbox.is_valid() {
            return Err(Error::InvalidInput(alloc::format!("invalid box {:?}", self.bbox)));
        }
        if !(0.0..=1.0).contains(&self.score) {
            return Err(Error::InvalidInput(alloc::format!("score {} outside [0, 1]", self.score)));
        }
        if let Some(s2) = self.score2 {
            if !(0.0..=self.score).contains(&s2) {
                return Err(Error::InvalidInput(alloc::format!(
                    "second score {s2} outside [0, {}]",
                    self.score
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GroundTruthObject {
    pub bbox: BBox,
    pub label: usize,
}

impl GroundTruthObject {
    pub fn new(bbox: BBox, label: usize) -> Self {
        Self { bbox, label }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObjectiveConfig {
    /// Score threshold ζ separating the localisation and confidence terms.
    pub zeta: f64,
    /// Weight λ of the confidence-margin term.
    pub lambda: f64,
    /// IoU at or above which a same-class detection still hits a ground truth.
    pub iou_threshold: f64,
    pub num_classes: usize,
}

impl ObjectiveConfig {
    pub fn new(num_classes: usize) -> Self {
        Self { zeta: 0.90, lambda: 1.0, iou_threshold: 0.50, num_classes }
    }

    pub fn validate(&self) -> Result<(), Error> {
        if !(self.zeta > 0.0 && self.zeta < 1.0) {
            return Err(Error::InvalidInput(alloc::format!("zeta {} not in (0, 1)", self.zeta)));
        }
        if !(self.iou_threshold > 0.0 && self.iou_threshold < 1.0) {
            return Err(Error::InvalidInput(alloc::format!(
                "iou threshold {} not in (0, 1)",
                self.iou_threshold
            )));
        }
        if !(self.lambda >= 0.0) {
            return Err(Error::InvalidInput(alloc::format!("lambda {} is negative", self.lambda)));
        }
        if self.num_classes == 0 {
            return Err(Error::InvalidInput("at least one class is required".into()));
        }
        Ok(())
    }

    /// Best score among the other classes: the reported second score, or the
    /// softmax lower bound `(1 - score) / (Y - 1)` when it is withheld.
    pub fn runner_up(&self, det: &Detection) -> f64 {
        match det.score2 {
            Some(s) => s,
            None if self.num_classes > 1 => (1.0 - det.score) / (self.num_classes - 1) as f64,
            None => 0.0,
        }
    }

    /// Loss contributed by one same-class detection/ground-truth pair.
    pub fn pair_term(&self, det: &Detection, gt: &GroundTruthObject) -> f64 {
        if det.score >= self.zeta {
            iou(&det.bbox, &gt.bbox)
        } else {
            self.lambda * (det.score - self.runner_up(det))
        }
    }
}

fn check_labels(dets: &[Detection], gts: &[GroundTruthObject], num_classes: usize) -> Result<(), Error> {
    let labels = dets.iter().map(|d| d.label).chain(gts.iter().map(|g| g.label));
    for label in labels {
        if label >= num_classes {
            return Err(Error::LabelOutOfRange { label, num_classes });
        }
    }
    Ok(())
}

/// Category-grouped attack loss; lower means a more successful attack.
///
/// Only detection/ground-truth pairs sharing a label are scored. A pair
/// contributes its IoU when the detection is confident (`score >= ζ`), and
/// `λ · (score − runner-up)` otherwise.
pub fn objective_h(dets: &[Detection], gts: &[GroundTruthObject], cfg: &ObjectiveConfig) -> Result<f64, Error> {
    check_labels(dets, gts, cfg.num_classes)?;
    let mut by_class: Vec<Vec<&GroundTruthObject>> = vec![Vec::new(); cfg.num_classes];
    for gt in gts {
        by_class[gt.label].push(gt);
    }
    Ok(dets
        .iter()
        .map(|d| by_class[d.label].iter().fold(0.0, |acc, g| acc + cfg.pair_term(d, g)))
        .fold(0.0, |acc, v| acc + v))
}

/// True when no detection still hits a ground truth of its own class.
pub fn attack_succeeded(dets: &[Detection], gts: &[GroundTruthObject], cfg: &ObjectiveConfig) -> bool {
    dets.iter().all(|d| {
        gts.iter()
            .all(|g| d.label != g.label || iou(&d.bbox, &g.bbox) < cfg.iou_threshold)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn gt0() -> GroundTruthObject {
        GroundTruthObject::new(BBox::new(0.0, 0.0, 10.0, 10.0), 0)
    }

    // IoU with gt0 is 60 / 100 = 0.6.
    fn box_06() -> BBox {
        BBox::new(0.0, 0.0, 10.0, 6.0)
    }

    #[test]
    fn confident_detection_scores_iou() {
        let cfg = ObjectiveConfig::new(3);
        let d = Detection::new(box_06(), 0, 0.95);
        let h = objective_h(&[d], &[gt0()], &cfg).unwrap();
        assert!((h - 0.6).abs() < 1e-12);
    }

    #[test]
    fn unconfident_detection_scores_margin() {
        let cfg = ObjectiveConfig::new(3);
        let d = Detection::new(box_06(), 0, 0.80).with_score2(0.15);
        let h = objective_h(&[d], &[gt0()], &cfg).unwrap();
        assert!((h - 0.65).abs() < 1e-12);
    }

    #[test]
    fn margin_fallback_uses_softmax_bound() {
        let cfg = ObjectiveConfig::new(3);
        let d = Detection::new(box_06(), 0, 0.80);
        let h = objective_h(&[d], &[gt0()], &cfg).unwrap();
        assert!((h - (0.80 - 0.10)).abs() < 1e-12);
    }

    #[test]
    fn empty_and_mixed_labels_are_zero() {
        let cfg = ObjectiveConfig::new(3);
        assert_eq!(objective_h(&[], &[gt0()], &cfg).unwrap(), 0.0);
        let d = Detection::new(box_06(), 1, 0.95);
        assert_eq!(objective_h(&[d], &[gt0()], &cfg).unwrap(), 0.0);
    }

    #[test]
    fn label_out_of_range_is_rejected() {
        let cfg = ObjectiveConfig::new(2);
        let d = Detection::new(box_06(), 2, 0.95);
        assert_eq!(
            objective_h(&[d], &[gt0()], &cfg),
            Err(Error::LabelOutOfRange { label: 2, num_classes: 2 })
        );
    }

    #[test]
    fn success_predicate_examples() {
        let cfg = ObjectiveConfig::new(3);
        assert!(attack_succeeded(&[], &[gt0()], &cfg));
        let overlapping = Detection::new(BBox::new(0.0, 0.0, 10.0, 9.0), 1, 0.99);
        assert!(attack_succeeded(&[overlapping], &[gt0()], &cfg));
        let hit = Detection::new(box_06(), 0, 0.99);
        assert!(!attack_succeeded(&[hit], &[gt0()], &cfg));
    }

    #[test]
    fn config_validation() {
        let mut cfg = ObjectiveConfig::new(3);
        assert!(cfg.validate().is_ok());
        cfg.zeta = 1.0;
        assert!(cfg.validate().is_err());
        cfg.zeta = 0.9;
        cfg.iou_threshold = 0.0;
        assert!(cfg.validate().is_err());
    }

    fn small_box() -> impl Strategy<Value = BBox> {
        (0..16u8, 0..16u8, 1..10u8, 1..10u8)
            .prop_map(|(x, y, w, h)| BBox::new(x.into(), y.into(), f64::from(x + w), f64::from(y + h)))
    }

    proptest! {
        #[test]
        fn raising_iou_of_a_confident_pair_never_lowers_h(
            w in 1..10u8, grow in 0..5u8, score in 0.9..1.0f64,
        ) {
            let cfg = ObjectiveConfig::new(2);
            let g = GroundTruthObject::new(BBox::new(0.0, 0.0, 10.0, 10.0), 0);
            let narrow = Detection::new(BBox::new(0.0, 0.0, f64::from(w), 10.0), 0, score);
            let wide_w = (w + grow).min(10);
            let wide = Detection::new(BBox::new(0.0, 0.0, f64::from(wide_w), 10.0), 0, score);
            let h_narrow = objective_h(&[narrow], &[g], &cfg).unwrap();
            let h_wide = objective_h(&[wide], &[g], &cfg).unwrap();
            prop_assert!(h_wide >= h_narrow);
        }

        #[test]
        fn success_means_confident_matched_terms_below_threshold(
            dets in proptest::collection::vec((small_box(), 0..2usize, 0.0..1.0f64), 0..5),
            gts in proptest::collection::vec((small_box(), 0..2usize), 1..4),
        ) {
            let cfg = ObjectiveConfig::new(2);
            let dets: Vec<_> = dets.into_iter().map(|(b, l, s)| Detection::new(b, l, s)).collect();
            let gts: Vec<_> = gts.into_iter().map(|(b, l)| GroundTruthObject::new(b, l)).collect();
            if attack_succeeded(&dets, &gts, &cfg) {
                for d in dets.iter().filter(|d| d.score >= cfg.zeta) {
                    for g in gts.iter().filter(|g| g.label == d.label) {
                        prop_assert!(cfg.pair_term(d, g) < cfg.iou_threshold);
                    }
                }
            }
        }
    }
}
