//! Dense channels-first 3-D arrays.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A `channels × rows × cols` array stored row-major, channel planes contiguous.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Array3 {
    channels: usize,
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Array3 {
    pub fn zeros(channels: usize, rows: usize, cols: usize) -> Self {
        Self::filled(channels, rows, cols, 0.0)
    }

    pub fn filled(channels: usize, rows: usize, cols: usize, value: f64) -> Self {
        Self {
            channels,
            rows,
            cols,
            data: vec![value; channels * rows * cols],
        }
    }

    pub fn from_vec(channels: usize, rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != channels * rows * cols {
            return Err(Error::Shape(format!(
                "buffer of {} values cannot be viewed as {channels}x{rows}x{cols}",
                data.len()
            )));
        }
        Ok(Self {
            channels,
            rows,
            cols,
            data,
        })
    }

    pub fn from_fn(
        channels: usize,
        rows: usize,
        cols: usize,
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Self {
        let mut data = Vec::with_capacity(channels * rows * cols);
        for c in 0..channels {
            for r in 0..rows {
                for q in 0..cols {
                    data.push(f(c, r, q));
                }
            }
        }
        Self {
            channels,
            rows,
            cols,
            data,
        }
    }

    #[inline]
    pub fn channels(&self) -> usize {
        self.channels
    }
    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }
    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }
    #[inline]
    pub fn shape(&self) -> (usize, usize, usize) {
        (self.channels, self.rows, self.cols)
    }
    #[inline]
    pub fn plane_len(&self) -> usize {
        self.rows * self.cols
    }
    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }
    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn get(&self, c: usize, r: usize, q: usize) -> f64 {
        self.data[(c * self.rows + r) * self.cols + q]
    }

    #[inline]
    pub fn set(&mut self, c: usize, r: usize, q: usize, v: f64) {
        self.data[(c * self.rows + r) * self.cols + q] = v;
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn plane(&self, c: usize) -> &[f64] {
        let n = self.plane_len();
        &self.data[c * n..(c + 1) * n]
    }

    pub fn plane_mut(&mut self, c: usize) -> &mut [f64] {
        let n = self.plane_len();
        &mut self.data[c * n..(c + 1) * n]
    }

    pub fn planes(&self) -> std::slice::Chunks<'_, f64> {
        self.data.chunks(self.plane_len().max(1))
    }

    pub fn planes_mut(&mut self) -> std::slice::ChunksMut<'_, f64> {
        let n = self.plane_len().max(1);
        self.data.chunks_mut(n)
    }

    pub fn same_shape(&self, other: &Array3) -> bool {
        self.shape() == other.shape()
    }

    pub fn ensure_same_shape(&self, other: &Array3, what: &str) -> Result<()> {
        if self.same_shape(other) {
            Ok(())
        } else {
            Err(Error::Shape(format!(
                "{what}: {:?} vs {:?}",
                self.shape(),
                other.shape()
            )))
        }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Array3 {
        Array3 {
            channels: self.channels,
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_map(&self, other: &Array3, f: impl Fn(f64, f64) -> f64) -> Array3 {
        debug_assert!(self.same_shape(other));
        Array3 {
            channels: self.channels,
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        }
    }

    pub fn add_assign(&mut self, other: &Array3) {
        debug_assert!(self.same_shape(other));
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn scaled_add_assign(&mut self, alpha: f64, other: &Array3) {
        debug_assert!(self.same_shape(other));
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += alpha * b;
        }
    }

    pub fn scale(&mut self, alpha: f64) {
        for a in &mut self.data {
            *a *= alpha;
        }
    }

    pub fn dot(&self, other: &Array3) -> f64 {
        self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum()
    }

    pub fn sum_sq(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }

    pub fn sum_sq_diff(&self, other: &Array3) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b) * (a - b))
            .sum()
    }

    pub fn min_max(&self) -> (f64, f64) {
        self.data
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            })
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Copies out a spatial window `[row, row+h) × [col, col+w)` of every channel.
    pub fn crop(&self, row: usize, col: usize, h: usize, w: usize) -> Result<Array3> {
        if row + h > self.rows || col + w > self.cols {
            return Err(Error::Shape(format!(
                "window {h}x{w} at ({row},{col}) exceeds {}x{}",
                self.rows, self.cols
            )));
        }
        let mut out = Array3::zeros(self.channels, h, w);
        for c in 0..self.channels {
            for r in 0..h {
                let src = &self.plane(c)[(row + r) * self.cols + col..][..w];
                out.plane_mut(c)[r * w..(r + 1) * w].copy_from_slice(src);
            }
        }
        Ok(out)
    }

    /// Writes `src` into the window starting at `(row, col)`.
    pub fn paste(&mut self, src: &Array3, row: usize, col: usize) {
        debug_assert_eq!(src.channels, self.channels);
        let cols = self.cols;
        for c in 0..self.channels {
            for r in 0..src.rows {
                let dst = &mut self.plane_mut(c)[(row + r) * cols + col..][..src.cols];
                dst.copy_from_slice(&src.plane(c)[r * src.cols..(r + 1) * src.cols]);
            }
        }
    }

    /// Concatenates along the channel axis.
    pub fn concat_channels(a: &Array3, b: &Array3) -> Result<Array3> {
        if a.rows != b.rows || a.cols != b.cols {
            return Err(Error::Shape(format!(
                "channel concat of {:?} and {:?}",
                a.shape(),
                b.shape()
            )));
        }
        let mut data = Vec::with_capacity(a.len() + b.len());
        data.extend_from_slice(&a.data);
        data.extend_from_slice(&b.data);
        Ok(Array3 {
            channels: a.channels + b.channels,
            rows: a.rows,
            cols: a.cols,
            data,
        })
    }

    /// Selects channels in the given order.
    pub fn select_channels(&self, order: &[usize]) -> Array3 {
        let n = self.plane_len();
        let mut data = Vec::with_capacity(order.len() * n);
        for &c in order {
            data.extend_from_slice(self.plane(c));
        }
        Array3 {
            channels: order.len(),
            rows: self.rows,
            cols: self.cols,
            data,
        }
    }

    /// Little-endian f32 bytes in channel-row-col order.
    pub fn to_f32_le_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.len() * 4);
        for &v in &self.data {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
        out
    }

    /// Rounds every value through `f32`, matching what an f32 file would hold.
    pub fn quantize_f32(&self) -> Array3 {
        self.map(|v| v as f32 as f64)
    }
}
