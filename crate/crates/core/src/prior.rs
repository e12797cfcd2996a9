//! Search regions derived from predicted boxes or external objectness masks.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng as _;
use rand::RngCore;

use crate::error::Error;
use crate::geometry::BBox;

/// Pixel positions where a patch origin may be placed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SearchMask {
    width: usize,
    height: usize,
    admissible: Vec<bool>,
}

/// Default margin around predicted boxes: 10% of `sqrt(w * h)`.
pub fn default_dilation(width: usize, height: usize) -> usize {
    libm::round(0.1 * libm::sqrt((width * height) as f64)) as usize
}

impl SearchMask {
    pub fn full(width: usize, height: usize) -> Self {
        Self { width, height, admissible: vec![true; width * height] }
    }

    /// Builds a mask from a row-major grid; an empty grid falls back to the full image.
    pub fn from_grid(width: usize, height: usize, admissible: Vec<bool>) -> Result<Self, Error> {
        if admissible.len() != width * height {
            return Err(Error::InvalidInput(alloc::format!(
                "{} mask cells for a {width}x{height} image",
                admissible.len()
            )));
        }
        if !admissible.iter().any(|&a| a) {
            return Ok(Self::full(width, height));
        }
        Ok(Self { width, height, admissible })
    }

    /// Admits 8-bit intensities above one half of full scale.
    pub fn from_intensities(width: usize, height: usize, gray: &[u8]) -> Result<Self, Error> {
        Self::from_grid(width, height, gray.iter().map(|&v| f64::from(v) / 255.0 > 0.5).collect())
    }

    /// Union of `boxes` grown by `dilation` pixels and clipped to the image.
    ///
    /// A pixel belongs to a box when its centre lies inside it.
    pub fn from_boxes(boxes: &[BBox], dilation: usize, width: usize, height: usize) -> Self {
        if boxes.is_empty() {
            return Self::full(width, height);
        }
        let mut admissible = vec![false; width * height];
        for b in boxes {
            let d = b.dilate_clip(dilation as f64, width as f64, height as f64);
            let (c0, c1) = (span_start(d.x1), span_end(d.x2, width));
            let (r0, r1) = (span_start(d.y1), span_end(d.y2, height));
            for r in r0..r1 {
                admissible[r * width + c0..r * width + c1.max(c0)].fill(true);
            }
        }
        if !admissible.iter().any(|&a| a) {
            return Self::full(width, height);
        }
        Self { width, height, admissible }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn is_admissible(&self, row: usize, col: usize) -> bool {
        self.admissible[row * self.width + col]
    }

    pub fn count(&self) -> usize {
        self.admissible.iter().filter(|&&a| a).count()
    }

    /// Uniform origin among admissible positions where a `side` patch fits,
    /// or among all fitting origins when none is admissible.
    pub fn sample_origin<R: RngCore + ?Sized>(&self, side: usize, rng: &mut R) -> Result<(usize, usize), Error> {
        if side == 0 || side > self.width || side > self.height {
            return Err(Error::InvalidInput(alloc::format!(
                "patch side {side} does not fit a {}x{} image",
                self.width,
                self.height
            )));
        }
        let (rows, cols) = (self.height - side + 1, self.width - side + 1);
        let feasible: Vec<(usize, usize)> = (0..rows)
            .flat_map(|r| (0..cols).map(move |c| (r, c)))
            .filter(|&(r, c)| self.is_admissible(r, c))
            .collect();
        if feasible.is_empty() {
            let i = rng.gen_range(0..rows * cols);
            return Ok((i / cols, i % cols));
        }
        Ok(feasible[rng.gen_range(0..feasible.len())])
    }
}

// First pixel whose centre is at or right of `lo`.
fn span_start(lo: f64) -> usize {
    libm::ceil(lo - 0.5).max(0.0) as usize
}

// One past the last pixel whose centre is left of `hi`.
fn span_end(hi: f64, limit: usize) -> usize {
    (libm::ceil(hi - 0.5).max(0.0) as usize).min(limit)
}
