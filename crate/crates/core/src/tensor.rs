//! Minimal dense containers used throughout the crate: a row-major matrix and
//! a `[batch, time, channel]` batch buffer. No broadcasting, no views; layers
//! index explicitly.

use alloc::vec;
use alloc::vec::Vec;

/// Row-major `rows x cols` matrix of `f64`.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols, "matrix data length mismatch");
        Self { rows, cols, data }
    }

    #[inline]
    pub fn at(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn at_mut(&mut self, r: usize, c: usize) -> &mut f64 {
        &mut self.data[r * self.cols + c]
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }
}

/// Batch of multichannel windows, laid out `[batch][time][channel]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub b: usize,
    pub t: usize,
    pub c: usize,
    pub data: Vec<f64>,
}

impl Batch {
    pub fn zeros(b: usize, t: usize, c: usize) -> Self {
        Self { b, t, c, data: vec![0.0; b * t * c] }
    }

    #[inline]
    pub fn idx(&self, bi: usize, ti: usize, ci: usize) -> usize {
        (bi * self.t + ti) * self.c + ci
    }

    #[inline]
    pub fn at(&self, bi: usize, ti: usize, ci: usize) -> f64 {
        self.data[self.idx(bi, ti, ci)]
    }

    #[inline]
    pub fn at_mut(&mut self, bi: usize, ti: usize, ci: usize) -> &mut f64 {
        let i = self.idx(bi, ti, ci);
        &mut self.data[i]
    }

    /// One sample's `[time][channel]` block.
    #[inline]
    pub fn sample(&self, bi: usize) -> &[f64] {
        &self.data[bi * self.t * self.c..(bi + 1) * self.t * self.c]
    }

    /// Reinterpret as a `[b, t*c]` matrix; the memory layout already matches.
    pub fn flatten(&self) -> Matrix {
        Matrix::from_vec(self.b, self.t * self.c, self.data.clone())
    }

    /// Reinterpret as a `[b*t, c]` matrix of per-step rows.
    pub fn flatten_steps(&self) -> Matrix {
        Matrix::from_vec(self.b * self.t, self.c, self.data.clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn batch_layout_matches_flatten() {
        let mut b = Batch::zeros(2, 3, 2);
        *b.at_mut(1, 2, 1) = 7.0;
        let m = b.flatten();
        assert_eq!(m.at(1, 5), 7.0);
        assert_eq!(b.sample(1)[5], 7.0);
    }
}
