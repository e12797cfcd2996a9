//! Seeded synthetic scenes for the toy detector.
//!
//! Each scene is a black canvas with one or more solid-class squares whose
//! pixels are jittered towards the edge of the detector's colour tolerance.
//! Squares sit two pixels off the window grid, so exactly one 16-pixel
//! window fits inside each and wins with fill 1.0; every other window scores
//! lower, which makes clean detection perfect by construction.

use alloc::format;
use alloc::vec::Vec;

use rand::Rng as _;

use crate::geometry::BBox;
use crate::image::Image;
use crate::objective::GroundTruthObject;
use crate::oracle::ToyDetectorConfig;
use crate::search::Sample;
use crate::substream;

#[derive(Debug, Clone, PartialEq)]
pub struct SceneConfig {
    pub width: usize,
    pub height: usize,
    pub object_side: usize,
    pub max_objects: usize,
    /// Per-pixel colour offset range, in ℓ∞ distance from the class colour.
    pub jitter: (f64, f64),
    /// Minimum empty gap between objects, in pixels.
    pub gap: usize,
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self { width: 64, height: 64, object_side: 20, max_objects: 2, jitter: (0.22, 0.29), gap: 8 }
    }
}

fn separated(a: &BBox, b: &BBox, gap: f64) -> bool {
    a.x2 + gap <= b.x1 || b.x2 + gap <= a.x1 || a.y2 + gap <= b.y1 || b.y2 + gap <= a.y1
}

/// Scene `index` of the suite seeded by `seed`.
pub fn scene(seed: u64, index: usize, cfg: &SceneConfig, detector: &ToyDetectorConfig) -> Sample {
    let mut rng = substream(seed, index as u64);
    let classes = detector.class_colors.len();
    let mut image = Image::zeros(cfg.width, cfg.height);
    let side = cfg.object_side;
    // Origins two pixels past a multiple of 4, with a 2-pixel border.
    let slots = |extent: usize| (0..).map(|i| 2 + 4 * i).take_while(move |&o| o + side + 2 <= extent);
    let rows: Vec<usize> = slots(cfg.height).collect();
    let cols: Vec<usize> = slots(cfg.width).collect();
    let wanted = rng.gen_range(1..=cfg.max_objects.max(1));
    let mut objects: Vec<GroundTruthObject> = Vec::new();
    for _ in 0..64 {
        if objects.len() == wanted || rows.is_empty() || cols.is_empty() {
            break;
        }
        let (r, c) = (rows[rng.gen_range(0..rows.len())], cols[rng.gen_range(0..cols.len())]);
        let bbox = BBox::square(r, c, side);
        if objects.iter().all(|o| separated(&o.bbox, &bbox, cfg.gap as f64)) {
            objects.push(GroundTruthObject::new(bbox, rng.gen_range(0..classes)));
        }
    }
    for o in &objects {
        let color = detector.class_colors[o.label];
        let (r0, c0) = (o.bbox.y1 as usize, o.bbox.x1 as usize);
        for r in r0..r0 + side {
            for c in c0..c0 + side {
                let mut px = color;
                let ch = rng.gen_range(0..3);
                let d = rng.gen_range(cfg.jitter.0..cfg.jitter.1);
                // Move away from the class colour while staying in range.
                px[ch] = if color[ch] >= 0.5 { color[ch] - d } else { color[ch] + d };
                // 8-bit levels, so scenes survive a PNG round trip unchanged.
                image.set_pixel(r, c, px.map(|v| libm::round(v * 255.0) / 255.0));
            }
        }
    }
    Sample::new(format!("scene_{index:03}"), image, objects)
}

pub fn suite(seed: u64, count: usize, cfg: &SceneConfig, detector: &ToyDetectorConfig) -> Vec<Sample> {
    (0..count).map(|i| scene(seed, i, cfg, detector)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::ToyDetector;

    #[test]
    fn scenes_are_deterministic_and_separated() {
        let cfg = SceneConfig::default();
        let det = ToyDetectorConfig::default();
        assert_eq!(scene(4, 2, &cfg, &det), scene(4, 2, &cfg, &det));
        for s in suite(4, 30, &cfg, &det) {
            assert!(!s.objects.is_empty());
            for (i, a) in s.objects.iter().enumerate() {
                for b in &s.objects[i + 1..] {
                    assert!(separated(&a.bbox, &b.bbox, 8.0));
                }
            }
        }
    }

    #[test]
    fn clean_scenes_are_detected_with_top_score() {
        let cfg = SceneConfig::default();
        let toy = ToyDetector::new(ToyDetectorConfig::default()).unwrap();
        for s in suite(1, 20, &cfg, toy.config()) {
            let dets = toy.detect_image(&s.image);
            for o in &s.objects {
                let inner = BBox::new(o.bbox.x1 + 2.0, o.bbox.y1 + 2.0, o.bbox.x1 + 18.0, o.bbox.y1 + 18.0);
                assert!(dets.iter().any(|d| d.label == o.label && d.bbox == inner && d.score == 1.0));
            }
            let perfect = dets.iter().filter(|d| d.score == 1.0).count();
            assert_eq!(perfect, s.objects.len());
        }
    }
}
