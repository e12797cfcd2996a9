//! Square patches, rectangle flips, ℓ∞ projection and the query schedules.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng as _;
use rand::RngCore;

use crate::error::Error;
use crate::image::Image;

/// Halving schedules for the patch area fraction and the parallel count.
#[derive(Debug, Clone, PartialEq)]
pub struct ScheduleConfig {
    /// Initial fraction of the image area covered by one square.
    pub e0: f64,
    pub e_milestones: Vec<usize>,
    /// Initial number of patches per query.
    pub p0: usize,
    pub p_milestones: Vec<usize>,
    /// ℓ∞ radius of the perturbation.
    pub epsilon: f64,
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        Self {
            e0: 0.05,
            e_milestones: vec![20, 100, 400, 1000, 2000, 4000, 8000],
            p0: 4,
            p_milestones: vec![20, 100, 1000, 2000],
            epsilon: 0.05,
        }
    }
}

fn passed(milestones: &[usize], q: usize) -> usize {
    milestones.iter().take_while(|&&m| m <= q).count()
}

fn strictly_increasing(ms: &[usize]) -> bool {
    ms.windows(2).all(|w| w[0] < w[1])
}

impl ScheduleConfig {
    pub fn validate(&self) -> Result<(), Error> {
        if !(self.e0 > 0.0 && self.e0 <= 1.0) {
            return Err(Error::InvalidInput(alloc::format!("e0 {} not in (0, 1]", self.e0)));
        }
        if self.p0 == 0 {
            return Err(Error::InvalidInput("p0 must be at least 1".into()));
        }
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(Error::InvalidInput(alloc::format!("epsilon {} must be positive", self.epsilon)));
        }
        if !strictly_increasing(&self.e_milestones) || !strictly_increasing(&self.p_milestones) {
            return Err(Error::InvalidInput("milestones must be strictly increasing".into()));
        }
        Ok(())
    }

    /// Area fraction in effect at query `q`.
    pub fn fraction_at(&self, q: usize) -> f64 {
        let k = passed(&self.e_milestones, q);
        self.e0 * libm::exp2(-(k as f64))
    }

    /// Square side at query `q`: `max(2, round(sqrt(e_q * w * h)))`.
    pub fn side_at(&self, q: usize, width: usize, height: usize) -> usize {
        let a = libm::round(libm::sqrt(self.fraction_at(q) * (width * height) as f64));
        (a as usize).max(2)
    }

    /// Patches per query at `q`, halved at each milestone and floored at 1.
    pub fn parallel_at(&self, q: usize) -> usize {
        let k = passed(&self.p_milestones, q) as u32;
        self.p0.checked_shr(k).unwrap_or(0).max(1)
    }
}

/// `a x a x 3` block of `±ε` values anchored at `(row, col)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Patch {
    pub row: usize,
    pub col: usize,
    pub side: usize,
    values: Vec<f64>,
}

impl Patch {
    pub fn new(side: usize, values: Vec<f64>) -> Result<Self, Error> {
        if side == 0 || values.len() != side * side * 3 {
            return Err(Error::InvalidInput(alloc::format!(
                "{} values do not form a {side}x{side}x3 patch",
                values.len()
            )));
        }
        Ok(Self { row: 0, col: 0, side, values })
    }

    pub fn placed(mut self, row: usize, col: usize) -> Self {
        self.row = row;
        self.col = col;
        self
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize, ch: usize) -> f64 {
        self.values[(r * self.side + c) * 3 + ch]
    }

    fn negate(&mut self, r: usize, c: usize) {
        let i = (r * self.side + c) * 3;
        for v in &mut self.values[i..i + 3] {
            *v = -*v;
        }
    }

    pub fn fits(&self, width: usize, height: usize) -> bool {
        self.row + self.side <= height && self.col + self.side <= width
    }
}

/// Square with one random sign per channel, `±ε` everywhere.
pub fn sample_square<R: RngCore + ?Sized>(rng: &mut R, side: usize, epsilon: f64) -> Patch {
    let side = side.max(1);
    let signs: [f64; 3] = core::array::from_fn(|_| if rng.gen::<bool>() { epsilon } else { -epsilon });
    let mut values = Vec::with_capacity(side * side * 3);
    for _ in 0..side * side {
        values.extend_from_slice(&signs);
    }
    Patch { row: 0, col: 0, side, values }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FlipOrientation {
    /// Negates the left `⌊a/2⌋` columns.
    Horizontal,
    /// Negates the top `⌊a/2⌋` rows.
    Vertical,
}

/// Negates one half-rectangle of the patch. Patches narrower than 2 are returned as is.
pub fn flip_half_oriented(mut p: Patch, orientation: FlipOrientation) -> Patch {
    if p.side < 2 {
        return p;
    }
    let half = p.side / 2;
    for r in 0..p.side {
        for c in 0..p.side {
            let hit = match orientation {
                FlipOrientation::Horizontal => c < half,
                FlipOrientation::Vertical => r < half,
            };
            if hit {
                p.negate(r, c);
            }
        }
    }
    p
}

/// Flips a uniformly chosen half (horizontal or vertical) of the patch.
pub fn flip_half<R: RngCore + ?Sized>(p: Patch, rng: &mut R) -> Patch {
    if p.side < 2 {
        return p;
    }
    let orientation = if rng.gen::<bool>() { FlipOrientation::Horizontal } else { FlipOrientation::Vertical };
    flip_half_oriented(p, orientation)
}

/// Writes `patches` over `base` (later ones win), projects onto the ε-ball and
/// the pixel range. Returns `(candidate image, candidate perturbation)`.
pub fn apply_and_project(
    clean: &Image,
    base: &Image,
    patches: &[Patch],
    epsilon: f64,
) -> Result<(Image, Image), Error> {
    if clean.dims() != base.dims() {
        return Err(Error::DimensionMismatch { expected: clean.dims(), found: base.dims() });
    }
    let (w, h) = clean.dims();
    let mut delta = base.clone();
    for p in patches {
        if !p.fits(w, h) {
            return Err(Error::PatchOutOfBounds { row: p.row, col: p.col, side: p.side });
        }
        for r in 0..p.side {
            let dst = delta.index(p.row + r, p.col, 0);
            let src = r * p.side * 3;
            delta.as_mut_slice()[dst..dst + p.side * 3].copy_from_slice(&p.values[src..src + p.side * 3]);
        }
    }
    for v in delta.as_mut_slice() {
        *v = v.clamp(-epsilon, epsilon);
    }
    let candidate = clean.add_clamped(&delta);
    Ok((candidate, delta))
}
