//! Axis-aligned boxes in pixel coordinates.

/// Corner-form box `(x1, y1)`–`(x2, y2)`, origin at the top-left.
///
/// `x` runs along columns and `y` along rows. Coordinates are continuous
/// since detectors emit sub-pixel boxes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BBox {
    pub x1: f64,
    pub y1: f64,
    pub x2: f64,
    pub y2: f64,
}

impl BBox {
    pub const fn new(x1: f64, y1: f64, x2: f64, y2: f64) -> Self {
        Self { x1, y1, x2, y2 }
    }

    /// Box covering `size` pixels from `(row, col)`.
    pub fn square(row: usize, col: usize, size: usize) -> Self {
        Self::new(col as f64, row as f64, (col + size) as f64, (row + size) as f64)
    }

    pub fn is_valid(&self) -> bool {
        [self.x1, self.y1, self.x2, self.y2].iter().all(|v| v.is_finite())
            && self.x1 <= self.x2
            && self.y1 <= self.y2
    }

    pub fn width(&self) -> f64 {
        self.x2 - self.x1
    }

    pub fn height(&self) -> f64 {
        self.y2 - self.y1
    }

    pub fn area(&self) -> f64 {
        area(self)
    }

    pub fn intersection(&self, other: &BBox) -> f64 {
        let w = self.x2.min(other.x2) - self.x1.max(other.x1);
        let h = self.y2.min(other.y2) - self.y1.max(other.y1);
        if w <= 0.0 || h <= 0.0 {
            0.0
        } else {
            w * h
        }
    }

    /// Grows the box by `margin` on every side and clips it to `[0, w] x [0, h]`.
    pub fn dilate_clip(&self, margin: f64, w: f64, h: f64) -> BBox {
        BBox::new(
            (self.x1 - margin).clamp(0.0, w),
            (self.y1 - margin).clamp(0.0, h),
            (self.x2 + margin).clamp(0.0, w),
            (self.y2 + margin).clamp(0.0, h),
        )
    }
}

pub fn area(b: &BBox) -> f64 {
    (b.x2 - b.x1) * (b.y2 - b.y1)
}

/// Intersection over union; zero when the union is empty.
pub fn iou(a: &BBox, b: &BBox) -> f64 {
    let inter = a.intersection(b);
    let union = area(a) + area(b) - inter;
    if union <= 0.0 {
        0.0
    } else {
        (inter / union).clamp(0.0, 1.0)
    }
}
