use alloc::vec;
use alloc::vec::Vec;

use crate::error::Error;

/// Dense row-major `height x width x 3` tensor with intensities in `[0, 1]`.
///
/// Also used for perturbations, whose entries lie in `[-ε, ε]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl Image {
    pub const CHANNELS: usize = 3;

    pub fn zeros(width: usize, height: usize) -> Self {
        Self { width, height, data: vec![0.0; width * height * Self::CHANNELS] }
    }

    pub fn filled(width: usize, height: usize, rgb: [f64; 3]) -> Self {
        let mut img = Self::zeros(width, height);
        for px in img.data.chunks_exact_mut(3) {
            px.copy_from_slice(&rgb);
        }
        img
    }

    pub fn from_raw(width: usize, height: usize, data: Vec<f64>) -> Result<Self, Error> {
        if data.len() != width * height * Self::CHANNELS {
            return Err(Error::InvalidInput(alloc::format!(
                "buffer of {} values cannot hold a {width}x{height} RGB image",
                data.len()
            )));
        }
        Ok(Self { width, height, data })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_raw(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn index(&self, row: usize, col: usize, channel: usize) -> usize {
        (row * self.width + col) * Self::CHANNELS + channel
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize, channel: usize) -> f64 {
        self.data[self.index(row, col, channel)]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, channel: usize, value: f64) {
        let i = self.index(row, col, channel);
        self.data[i] = value;
    }

    pub fn pixel(&self, row: usize, col: usize) -> [f64; 3] {
        let i = self.index(row, col, 0);
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    pub fn set_pixel(&mut self, row: usize, col: usize, rgb: [f64; 3]) {
        let i = self.index(row, col, 0);
        self.data[i..i + 3].copy_from_slice(&rgb);
    }

    /// Largest absolute elementwise difference.
    pub fn linf_distance(&self, other: &Image) -> f64 {
        self.data.iter().zip(&other.data).fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }

    pub fn linf_norm(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// `clamp(self + delta, 0, 1)`.
    pub fn add_clamped(&self, delta: &Image) -> Image {
        debug_assert_eq!(self.dims(), delta.dims());
        let data = self.data.iter().zip(&delta.data).map(|(x, d)| (x + d).clamp(0.0, 1.0)).collect();
        Image { width: self.width, height: self.height, data }
    }
}
