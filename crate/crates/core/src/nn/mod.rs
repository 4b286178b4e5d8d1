//! Neural-network building blocks with hand-written forward and backward
//! passes. All arithmetic is f64; no external ML framework.
//!
//! Layers cache whatever the backward pass needs during `forward`, so the
//! call order is always forward -> backward -> (optimizer step). `Mode::Eval`
//! disables dropout and switches batch norm to running statistics; gradients
//! still flow, which is what the finite-difference checks exercise.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::math;

pub mod attention;
pub mod layers;
pub mod lstm;

pub use attention::{scaled_dot_product_attention, MultiHeadSelfAttention, TemporalSelfAttention};
pub use layers::{BatchNorm1d, Conv1d, Dense, Dropout, GlobalAvgPool, LayerNorm, MaxPool1d, Relu};
pub use lstm::Lstm;

/// Forward-pass mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// A named parameter tensor with its gradient accumulator.
#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub name: String,
    pub shape: Vec<usize>,
    pub value: Vec<f64>,
    pub grad: Vec<f64>,
}

impl Param {
    pub fn zeros(name: String, shape: Vec<usize>) -> Self {
        let n: usize = shape.iter().product();
        Self { name, shape, value: vec![0.0; n], grad: vec![0.0; n] }
    }

    /// Uniform init in `±1/sqrt(fan_in)`.
    pub fn fan_in_uniform(name: String, shape: Vec<usize>, fan_in: usize, rng: &mut ChaCha8Rng) -> Self {
        let bound = 1.0 / math::sqrt(fan_in.max(1) as f64);
        let n: usize = shape.iter().product();
        let value = (0..n).map(|_| rng.gen_range(-bound..bound)).collect();
        Self { name, shape, value, grad: vec![0.0; n] }
    }

    /// Orthogonal init for square recurrent kernels (rows orthonormal).
    pub fn orthogonal(name: String, dim: usize, rng: &mut ChaCha8Rng) -> Self {
        let value = orthogonal_matrix(dim, rng);
        Self { name, shape: vec![dim, dim], value, grad: vec![0.0; dim * dim] }
    }

    pub fn len(&self) -> usize {
        self.value.len()
    }

    pub fn is_empty(&self) -> bool {
        self.value.is_empty()
    }

    pub fn zero_grad(&mut self) {
        self.grad.iter_mut().for_each(|g| *g = 0.0);
    }
}

/// Standard normal draw (Box-Muller).
pub(crate) fn normal_draw(rng: &mut ChaCha8Rng) -> f64 {
    loop {
        let u1: f64 = rng.gen();
        if u1 > 1e-300 {
            let u2: f64 = rng.gen();
            return math::sqrt(-2.0 * math::ln(u1)) * math::cos(2.0 * core::f64::consts::PI * u2);
        }
    }
}

/// Row-orthonormal `dim x dim` matrix via Gram-Schmidt on a Gaussian draw.
fn orthogonal_matrix(dim: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut m: Vec<f64> = (0..dim * dim).map(|_| normal_draw(rng)).collect();
    for r in 0..dim {
        for p in 0..r {
            let dot: f64 = (0..dim).map(|j| m[r * dim + j] * m[p * dim + j]).sum();
            for j in 0..dim {
                m[r * dim + j] -= dot * m[p * dim + j];
            }
        }
        let norm = math::sqrt((0..dim).map(|j| m[r * dim + j] * m[r * dim + j]).sum::<f64>());
        if norm > 1e-12 {
            for j in 0..dim {
                m[r * dim + j] /= norm;
            }
        } else {
            // Degenerate draw; fall back to a unit row.
            for j in 0..dim {
                m[r * dim + j] = if j == r { 1.0 } else { 0.0 };
            }
        }
    }
    m
}

/// In-place row softmax with max subtraction.
pub(crate) fn softmax_rows(data: &mut [f64], rows: usize, cols: usize) {
    for r in 0..rows {
        let row = &mut data[r * cols..(r + 1) * cols];
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = math::exp(*v - max);
            sum += *v;
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
}

/// Backward through a row softmax: given `a = softmax(z)` and `da`,
/// `dz = a * (da - sum(da * a))` per row.
pub(crate) fn softmax_rows_backward(attn: &[f64], dattn: &[f64], rows: usize, cols: usize, out: &mut [f64]) {
    for r in 0..rows {
        let a = &attn[r * cols..(r + 1) * cols];
        let da = &dattn[r * cols..(r + 1) * cols];
        let dot: f64 = a.iter().zip(da).map(|(x, y)| x * y).sum();
        for j in 0..cols {
            out[r * cols + j] = a[j] * (da[j] - dot);
        }
    }
}

#[cfg(test)]
pub(crate) mod testutil {
    //! Finite-difference scaffolding shared by the layer tests.

    use super::*;

    /// Central finite difference of `f` w.r.t. `value[i]`.
    pub fn fd_at<F: FnMut(&[f64]) -> f64>(value: &mut Vec<f64>, i: usize, eps: f64, f: &mut F) -> f64 {
        let orig = value[i];
        value[i] = orig + eps;
        let up = f(value);
        value[i] = orig - eps;
        let down = f(value);
        value[i] = orig;
        (up - down) / (2.0 * eps)
    }

    pub fn assert_close(analytic: f64, numeric: f64, tol: f64, what: &str) {
        let denom = numeric.abs().max(1e-6);
        let rel = (analytic - numeric).abs() / denom;
        assert!(
            rel < tol,
            "{what}: analytic {analytic} vs numeric {numeric} (rel {rel})"
        );
    }

    /// Deterministic pseudo-random weights for scalarizing layer outputs.
    pub fn probe_weights(n: usize) -> Vec<f64> {
        (0..n).map(|i| ((i * 2654435761 % 1000) as f64 / 500.0) - 1.0 + 0.01).collect()
    }

    pub fn weighted_sum(out: &[f64], w: &[f64]) -> f64 {
        out.iter().zip(w).map(|(a, b)| a * b).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn orthogonal_rows_are_orthonormal() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let dim = 16;
        let m = orthogonal_matrix(dim, &mut rng);
        for r in 0..dim {
            for p in 0..dim {
                let dot: f64 = (0..dim).map(|j| m[r * dim + j] * m[p * dim + j]).sum();
                let expect = if r == p { 1.0 } else { 0.0 };
                assert!((dot - expect).abs() < 1e-10, "rows {r},{p}: {dot}");
            }
        }
    }

    #[test]
    fn softmax_rows_normalize() {
        let mut data = vec![1.0, 2.0, 3.0, -1.0, 0.0, 1.0];
        softmax_rows(&mut data, 2, 3);
        for r in 0..2 {
            let sum: f64 = data[r * 3..(r + 1) * 3].iter().sum();
            assert!((sum - 1.0).abs() < 1e-12);
            assert!(data[r * 3..(r + 1) * 3].iter().all(|&v| v > 0.0));
        }
    }

    #[test]
    fn fan_in_uniform_is_seeded() {
        let mut a = ChaCha8Rng::seed_from_u64(9);
        let mut b = ChaCha8Rng::seed_from_u64(9);
        let pa = Param::fan_in_uniform("w".into(), vec![4, 4], 4, &mut a);
        let pb = Param::fan_in_uniform("w".into(), vec![4, 4], 4, &mut b);
        assert_eq!(pa.value, pb.value);
        assert!(pa.value.iter().all(|v| v.abs() <= 0.5));
    }

    #[test]
    fn normal_moments_are_sane() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let xs: Vec<f64> = (0..20000).map(|_| normal_draw(&mut rng)).collect();
        let mean = crate::math::mean(&xs);
        let var = crate::math::variance(&xs);
        assert!(mean.abs() < 0.05, "mean {mean}");
        assert!((var - 1.0).abs() < 0.05, "var {var}");
    }
}
