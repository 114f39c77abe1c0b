use crate::error::{Error, Result};
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

/// An H x W x C float image, row-major `(row, col, channel)`.
///
/// Values are normalized intensities; after pixel scaling they lie in
/// `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub values: Vec<f32>,
}

impl Image {
    pub fn new(height: usize, width: usize, channels: usize, values: Vec<f32>) -> Result<Image> {
        if values.len() != height * width * channels {
            return Err(Error::Validation(format!(
                "image buffer length {} does not match {height}x{width}x{channels}",
                values.len()
            )));
        }
        Ok(Image {
            height,
            width,
            channels,
            values,
        })
    }

    pub fn zeros(height: usize, width: usize, channels: usize) -> Image {
        Image {
            height,
            width,
            channels,
            values: vec![0.0; height * width * channels],
        }
    }

    #[inline]
    pub fn idx(&self, row: usize, col: usize, ch: usize) -> usize {
        (row * self.width + col) * self.channels + ch
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize, ch: usize) -> f32 {
        self.values[self.idx(row, col, ch)]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, ch: usize, v: f32) {
        let i = self.idx(row, col, ch);
        self.values[i] = v;
    }

    /// Zero outside the image bounds; used as the fill for geometric maps.
    #[inline]
    pub fn get_or_zero(&self, row: isize, col: isize, ch: usize) -> f32 {
        if row < 0 || col < 0 || row >= self.height as isize || col >= self.width as isize {
            0.0
        } else {
            self.get(row as usize, col as usize, ch)
        }
    }

    /// Bilinear sample at fractional coordinates, zero fill outside.
    pub fn sample_bilinear(&self, row: f64, col: f64, ch: usize) -> f32 {
        let r0 = libm::floor(row) as isize;
        let c0 = libm::floor(col) as isize;
        let fr = (row - r0 as f64) as f32;
        let fc = (col - c0 as f64) as f32;
        let v00 = self.get_or_zero(r0, c0, ch);
        let v01 = self.get_or_zero(r0, c0 + 1, ch);
        let v10 = self.get_or_zero(r0 + 1, c0, ch);
        let v11 = self.get_or_zero(r0 + 1, c0 + 1, ch);
        let top = v00 * (1.0 - fc) + v01 * fc;
        let bot = v10 * (1.0 - fc) + v11 * fc;
        top * (1.0 - fr) + bot * fr
    }

    /// Per-channel mean intensity.
    pub fn channel_means(&self) -> Vec<f32> {
        let mut sums = vec![0.0f64; self.channels];
        for px in self.values.chunks_exact(self.channels) {
            for (s, &v) in sums.iter_mut().zip(px) {
                *s += v as f64;
            }
        }
        let n = (self.height * self.width) as f64;
        sums.iter().map(|s| (s / n) as f32).collect()
    }
}
