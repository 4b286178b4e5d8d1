//! Feed-forward layers: dense, 1D convolution, batch norm, max pooling,
//! dropout, ReLU, global average pooling, and layer norm.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::math;
use crate::nn::{Mode, Param};
use crate::tensor::{Batch, Matrix};

// ── Dense ────────────────────────────────────────────────────────────────────

/// Fully connected layer `y = x W^T + b` on `[rows x in]` matrices.
#[derive(Debug, Clone)]
pub struct Dense {
    pub w: Param,
    pub b: Param,
    pub in_dim: usize,
    pub out_dim: usize,
    cache_x: Option<Matrix>,
}

impl Dense {
    pub fn new(name: &str, in_dim: usize, out_dim: usize, rng: &mut ChaCha8Rng) -> Self {
        Self {
            w: Param::fan_in_uniform(format!("{name}.weight"), vec![out_dim, in_dim], in_dim, rng),
            b: Param::fan_in_uniform(format!("{name}.bias"), vec![out_dim], in_dim, rng),
            in_dim,
            out_dim,
            cache_x: None,
        }
    }

    pub fn forward(&mut self, x: &Matrix) -> Matrix {
        debug_assert_eq!(x.cols, self.in_dim);
        let mut y = Matrix::zeros(x.rows, self.out_dim);
        for r in 0..x.rows {
            let xr = x.row(r);
            let yr = y.row_mut(r);
            for o in 0..self.out_dim {
                let wr = &self.w.value[o * self.in_dim..(o + 1) * self.in_dim];
                let mut acc = self.b.value[o];
                for i in 0..self.in_dim {
                    acc += wr[i] * xr[i];
                }
                yr[o] = acc;
            }
        }
        self.cache_x = Some(x.clone());
        y
    }

    pub fn backward(&mut self, dy: &Matrix) -> Matrix {
        let x = self.cache_x.as_ref().expect("forward before backward");
        debug_assert_eq!(dy.cols, self.out_dim);
        debug_assert_eq!(dy.rows, x.rows);
        let mut dx = Matrix::zeros(x.rows, self.in_dim);
        for r in 0..x.rows {
            let xr = x.row(r);
            let dyr = dy.row(r);
            let dxr = dx.row_mut(r);
            for o in 0..self.out_dim {
                let g = dyr[o];
                self.b.grad[o] += g;
                let wr = &self.w.value[o * self.in_dim..(o + 1) * self.in_dim];
                let gwr = &mut self.w.grad[o * self.in_dim..(o + 1) * self.in_dim];
                for i in 0..self.in_dim {
                    gwr[i] += g * xr[i];
                    dxr[i] += g * wr[i];
                }
            }
        }
        dx
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        vec![&mut self.w, &mut self.b]
    }
}

// ── Conv1d ───────────────────────────────────────────────────────────────────

/// 1D convolution over time, stride 1, zero padding. Odd kernels with
/// `pad = (k-1)/2` preserve the sequence length.
#[derive(Debug, Clone)]
pub struct Conv1d {
    pub w: Param,
    pub b: Param,
    pub in_ch: usize,
    pub out_ch: usize,
    pub kernel: usize,
    pub pad: usize,
    cache_x: Option<Batch>,
}

impl Conv1d {
    pub fn new(name: &str, in_ch: usize, out_ch: usize, kernel: usize, rng: &mut ChaCha8Rng) -> Self {
        let fan_in = in_ch * kernel;
        Self {
            w: Param::fan_in_uniform(
                format!("{name}.weight"),
                vec![out_ch, in_ch, kernel],
                fan_in,
                rng,
            ),
            b: Param::fan_in_uniform(format!("{name}.bias"), vec![out_ch], fan_in, rng),
            in_ch,
            out_ch,
            kernel,
            pad: (kernel - 1) / 2,
            cache_x: None,
        }
    }

    #[inline]
    fn w_at(&self, o: usize, ci: usize, k: usize) -> f64 {
        self.w.value[(o * self.in_ch + ci) * self.kernel + k]
    }

    pub fn forward(&mut self, x: &Batch) -> Batch {
        debug_assert_eq!(x.c, self.in_ch);
        let mut y = Batch::zeros(x.b, x.t, self.out_ch);
        for bi in 0..x.b {
            for ti in 0..x.t {
                for o in 0..self.out_ch {
                    let mut acc = self.b.value[o];
                    for k in 0..self.kernel {
                        let src = ti as isize + k as isize - self.pad as isize;
                        if src < 0 || src >= x.t as isize {
                            continue;
                        }
                        let src = src as usize;
                        for ci in 0..self.in_ch {
                            acc += self.w_at(o, ci, k) * x.at(bi, src, ci);
                        }
                    }
                    *y.at_mut(bi, ti, o) = acc;
                }
            }
        }
        self.cache_x = Some(x.clone());
        y
    }

    pub fn backward(&mut self, dy: &Batch) -> Batch {
        let x = self.cache_x.as_ref().expect("forward before backward");
        debug_assert_eq!(dy.c, self.out_ch);
        let mut dx = Batch::zeros(x.b, x.t, self.in_ch);
        for bi in 0..x.b {
            for ti in 0..x.t {
                for o in 0..self.out_ch {
                    let g = dy.at(bi, ti, o);
                    if g == 0.0 {
                        continue;
                    }
                    self.b.grad[o] += g;
                    for k in 0..self.kernel {
                        let src = ti as isize + k as isize - self.pad as isize;
                        if src < 0 || src >= x.t as isize {
                            continue;
                        }
                        let src = src as usize;
                        for ci in 0..self.in_ch {
                            let wi = (o * self.in_ch + ci) * self.kernel + k;
                            self.w.grad[wi] += g * x.at(bi, src, ci);
                            *dx.at_mut(bi, src, ci) += g * self.w.value[wi];
                        }
                    }
                }
            }
        }
        dx
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        vec![&mut self.w, &mut self.b]
    }
}

// ── BatchNorm1d ──────────────────────────────────────────────────────────────

#[derive(Debug, Clone)]
struct BnCache {
    xhat: Vec<f64>,
    inv_std: Vec<f64>,
    rows: usize,
}

/// Batch normalization over the row dimension of `[rows x channels]` data.
/// Sequences normalize per channel across batch and time, flat inputs across
/// the batch. Training uses batch statistics and updates the running ones;
/// eval normalizes with the running statistics (biased variance throughout).
#[derive(Debug, Clone)]
pub struct BatchNorm1d {
    pub gamma: Param,
    pub beta: Param,
    pub running_mean: Vec<f64>,
    pub running_var: Vec<f64>,
    pub momentum: f64,
    pub eps: f64,
    name: String,
    channels: usize,
    cache: Option<BnCache>,
    cached_mode: Mode,
}

impl BatchNorm1d {
    pub fn new(name: &str, channels: usize) -> Self {
        let mut gamma = Param::zeros(format!("{name}.gamma"), vec![channels]);
        gamma.value.iter_mut().for_each(|v| *v = 1.0);
        Self {
            gamma,
            beta: Param::zeros(format!("{name}.beta"), vec![channels]),
            running_mean: vec![0.0; channels],
            running_var: vec![1.0; channels],
            momentum: 0.1,
            eps: 1e-5,
            name: String::from(name),
            channels,
            cache: None,
            cached_mode: Mode::Eval,
        }
    }

    /// Running statistics: model state that is not optimized but must travel
    /// with checkpoints and best-epoch snapshots.
    pub fn buffers_mut(&mut self) -> Vec<(String, &mut Vec<f64>)> {
        vec![
            (format!("{}.running_mean", self.name), &mut self.running_mean),
            (format!("{}.running_var", self.name), &mut self.running_var),
        ]
    }

    pub fn forward_rows(&mut self, x: &[f64], rows: usize, mode: Mode) -> Vec<f64> {
        let c = self.channels;
        debug_assert_eq!(x.len(), rows * c);
        let (mean, var) = match mode {
            Mode::Train => {
                let mut mean = vec![0.0; c];
                let mut var = vec![0.0; c];
                for r in 0..rows {
                    for j in 0..c {
                        mean[j] += x[r * c + j];
                    }
                }
                mean.iter_mut().for_each(|m| *m /= rows as f64);
                for r in 0..rows {
                    for j in 0..c {
                        let d = x[r * c + j] - mean[j];
                        var[j] += d * d;
                    }
                }
                var.iter_mut().for_each(|v| *v /= rows as f64);
                for j in 0..c {
                    self.running_mean[j] =
                        (1.0 - self.momentum) * self.running_mean[j] + self.momentum * mean[j];
                    self.running_var[j] =
                        (1.0 - self.momentum) * self.running_var[j] + self.momentum * var[j];
                }
                (mean, var)
            }
            Mode::Eval => (self.running_mean.clone(), self.running_var.clone()),
        };
        let inv_std: Vec<f64> = var.iter().map(|&v| 1.0 / math::sqrt(v + self.eps)).collect();
        let mut xhat = vec![0.0; rows * c];
        let mut y = vec![0.0; rows * c];
        for r in 0..rows {
            for j in 0..c {
                let h = (x[r * c + j] - mean[j]) * inv_std[j];
                xhat[r * c + j] = h;
                y[r * c + j] = self.gamma.value[j] * h + self.beta.value[j];
            }
        }
        self.cache = Some(BnCache { xhat, inv_std, rows });
        self.cached_mode = mode;
        y
    }

    pub fn backward_rows(&mut self, dy: &[f64]) -> Vec<f64> {
        let c = self.channels;
        let cache = self.cache.as_ref().expect("forward before backward");
        let rows = cache.rows;
        debug_assert_eq!(dy.len(), rows * c);
        let mut dx = vec![0.0; rows * c];
        match self.cached_mode {
            Mode::Eval => {
                // Affine in x: dx = dy * gamma * inv_std.
                for r in 0..rows {
                    for j in 0..c {
                        let g = dy[r * c + j];
                        self.gamma.grad[j] += g * cache.xhat[r * c + j];
                        self.beta.grad[j] += g;
                        dx[r * c + j] = g * self.gamma.value[j] * cache.inv_std[j];
                    }
                }
            }
            Mode::Train => {
                let n = rows as f64;
                let mut sum_dxhat = vec![0.0; c];
                let mut sum_dxhat_xhat = vec![0.0; c];
                for r in 0..rows {
                    for j in 0..c {
                        let g = dy[r * c + j];
                        self.gamma.grad[j] += g * cache.xhat[r * c + j];
                        self.beta.grad[j] += g;
                        let dxhat = g * self.gamma.value[j];
                        sum_dxhat[j] += dxhat;
                        sum_dxhat_xhat[j] += dxhat * cache.xhat[r * c + j];
                    }
                }
                for r in 0..rows {
                    for j in 0..c {
                        let dxhat = dy[r * c + j] * self.gamma.value[j];
                        dx[r * c + j] = cache.inv_std[j]
                            * (dxhat
                                - sum_dxhat[j] / n
                                - cache.xhat[r * c + j] * sum_dxhat_xhat[j] / n);
                    }
                }
            }
        }
        dx
    }

    pub fn forward_seq(&mut self, x: &Batch, mode: Mode) -> Batch {
        let data = self.forward_rows(&x.data, x.b * x.t, mode);
        Batch { b: x.b, t: x.t, c: x.c, data }
    }

    pub fn backward_seq(&mut self, dy: &Batch) -> Batch {
        let data = self.backward_rows(&dy.data);
        Batch { b: dy.b, t: dy.t, c: dy.c, data }
    }

    pub fn forward_flat(&mut self, x: &Matrix, mode: Mode) -> Matrix {
        let data = self.forward_rows(&x.data, x.rows, mode);
        Matrix { rows: x.rows, cols: x.cols, data }
    }

    pub fn backward_flat(&mut self, dy: &Matrix) -> Matrix {
        let data = self.backward_rows(&dy.data);
        Matrix { rows: dy.rows, cols: dy.cols, data }
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        vec![&mut self.gamma, &mut self.beta]
    }
}

// ── MaxPool1d ────────────────────────────────────────────────────────────────

/// Temporal max pooling with kernel = stride = 2; output length is the floor
/// division of the input length.
#[derive(Debug, Clone, Default)]
pub struct MaxPool1d {
    argmax: Option<(Vec<usize>, usize, usize, usize)>,
}

impl MaxPool1d {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn forward(&mut self, x: &Batch) -> Batch {
        let t_out = x.t / 2;
        let mut y = Batch::zeros(x.b, t_out, x.c);
        let mut argmax = vec![0usize; x.b * t_out * x.c];
        for bi in 0..x.b {
            for to in 0..t_out {
                for ci in 0..x.c {
                    let i0 = x.idx(bi, 2 * to, ci);
                    let i1 = x.idx(bi, 2 * to + 1, ci);
                    // Ties pick the earlier step.
                    let (val, arg) =
                        if x.data[i1] > x.data[i0] { (x.data[i1], i1) } else { (x.data[i0], i0) };
                    *y.at_mut(bi, to, ci) = val;
                    argmax[y.idx(bi, to, ci)] = arg;
                }
            }
        }
        self.argmax = Some((argmax, x.b, x.t, x.c));
        y
    }

    pub fn backward(&mut self, dy: &Batch) -> Batch {
        let (argmax, b, t, c) = self.argmax.as_ref().expect("forward before backward");
        let mut dx = Batch::zeros(*b, *t, *c);
        for (i, &src) in argmax.iter().enumerate() {
            dx.data[src] += dy.data[i];
        }
        dx
    }
}

// ── Dropout ──────────────────────────────────────────────────────────────────

/// Inverted dropout with a layer-owned seeded RNG; identity in eval mode or
/// at rate zero (no RNG draw, so the stream stays stable).
#[derive(Debug, Clone)]
pub struct Dropout {
    pub rate: f64,
    rng: ChaCha8Rng,
    mask: Option<Vec<f64>>,
}

impl Dropout {
    pub fn new(rate: f64, seed: u64) -> Self {
        Self { rate, rng: ChaCha8Rng::seed_from_u64(seed), mask: None }
    }

    pub fn forward(&mut self, x: &[f64], mode: Mode) -> Vec<f64> {
        if mode == Mode::Eval || self.rate <= 0.0 {
            self.mask = None;
            return x.to_vec();
        }
        let keep = 1.0 - self.rate;
        let mask: Vec<f64> = (0..x.len())
            .map(|_| if self.rng.gen::<f64>() < self.rate { 0.0 } else { 1.0 / keep })
            .collect();
        let y = x.iter().zip(&mask).map(|(v, m)| v * m).collect();
        self.mask = Some(mask);
        y
    }

    pub fn backward(&mut self, dy: &[f64]) -> Vec<f64> {
        match &self.mask {
            None => dy.to_vec(),
            Some(mask) => dy.iter().zip(mask).map(|(g, m)| g * m).collect(),
        }
    }
}

// ── ReLU ─────────────────────────────────────────────────────────────────────

/// Elementwise ReLU; shape-agnostic over flat buffers.
#[derive(Debug, Clone, Default)]
pub struct Relu {
    mask: Option<Vec<bool>>,
}

impl Relu {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn forward(&mut self, x: &[f64]) -> Vec<f64> {
        let mask: Vec<bool> = x.iter().map(|&v| v > 0.0).collect();
        let y = x.iter().zip(&mask).map(|(&v, &m)| if m { v } else { 0.0 }).collect();
        self.mask = Some(mask);
        y
    }

    pub fn backward(&mut self, dy: &[f64]) -> Vec<f64> {
        let mask = self.mask.as_ref().expect("forward before backward");
        dy.iter().zip(mask).map(|(&g, &m)| if m { g } else { 0.0 }).collect()
    }
}

// ── GlobalAvgPool ────────────────────────────────────────────────────────────

/// Mean over the time dimension: `[b, t, c] -> [b, c]`.
#[derive(Debug, Clone, Default)]
pub struct GlobalAvgPool {
    t: usize,
}

impl GlobalAvgPool {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn forward(&mut self, x: &Batch) -> Matrix {
        let mut y = Matrix::zeros(x.b, x.c);
        for bi in 0..x.b {
            for ti in 0..x.t {
                for ci in 0..x.c {
                    *y.at_mut(bi, ci) += x.at(bi, ti, ci);
                }
            }
        }
        y.data.iter_mut().for_each(|v| *v /= x.t as f64);
        self.t = x.t;
        y
    }

    pub fn backward(&mut self, dy: &Matrix) -> Batch {
        let t = self.t;
        let mut dx = Batch::zeros(dy.rows, t, dy.cols);
        for bi in 0..dy.rows {
            for ti in 0..t {
                for ci in 0..dy.cols {
                    *dx.at_mut(bi, ti, ci) = dy.at(bi, ci) / t as f64;
                }
            }
        }
        dx
    }
}

// ── LayerNorm ────────────────────────────────────────────────────────────────

/// Layer normalization over the channel dimension of each time step.
#[derive(Debug, Clone)]
pub struct LayerNorm {
    pub gamma: Param,
    pub beta: Param,
    pub eps: f64,
    dim: usize,
    cache: Option<(Vec<f64>, Vec<f64>)>, // xhat, inv_std per row
}

impl LayerNorm {
    pub fn new(name: &str, dim: usize) -> Self {
        let mut gamma = Param::zeros(format!("{name}.gamma"), vec![dim]);
        gamma.value.iter_mut().for_each(|v| *v = 1.0);
        Self { gamma, beta: Param::zeros(format!("{name}.beta"), vec![dim]), eps: 1e-5, dim, cache: None }
    }

    pub fn forward(&mut self, x: &Batch) -> Batch {
        let d = self.dim;
        debug_assert_eq!(x.c, d);
        let rows = x.b * x.t;
        let mut xhat = vec![0.0; rows * d];
        let mut inv_std = vec![0.0; rows];
        let mut y = Batch::zeros(x.b, x.t, d);
        for r in 0..rows {
            let row = &x.data[r * d..(r + 1) * d];
            let mean = math::mean(row);
            let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
            let istd = 1.0 / math::sqrt(var + self.eps);
            inv_std[r] = istd;
            for j in 0..d {
                let h = (row[j] - mean) * istd;
                xhat[r * d + j] = h;
                y.data[r * d + j] = self.gamma.value[j] * h + self.beta.value[j];
            }
        }
        self.cache = Some((xhat, inv_std));
        y
    }

    pub fn backward(&mut self, dy: &Batch) -> Batch {
        let d = self.dim;
        let (xhat, inv_std) = self.cache.as_ref().expect("forward before backward");
        let rows = dy.b * dy.t;
        let mut dx = Batch::zeros(dy.b, dy.t, d);
        for r in 0..rows {
            let dyr = &dy.data[r * d..(r + 1) * d];
            let xh = &xhat[r * d..(r + 1) * d];
            let mut sum_dxhat = 0.0;
            let mut sum_dxhat_xhat = 0.0;
            for j in 0..d {
                let g = dyr[j];
                self.gamma.grad[j] += g * xh[j];
                self.beta.grad[j] += g;
                let dxhat = g * self.gamma.value[j];
                sum_dxhat += dxhat;
                sum_dxhat_xhat += dxhat * xh[j];
            }
            let n = d as f64;
            for j in 0..d {
                let dxhat = dyr[j] * self.gamma.value[j];
                dx.data[r * d + j] =
                    inv_std[r] * (dxhat - sum_dxhat / n - xh[j] * sum_dxhat_xhat / n);
            }
        }
        dx
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        vec![&mut self.gamma, &mut self.beta]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::testutil::{assert_close, fd_at, probe_weights, weighted_sum};

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    fn batch_from(b: usize, t: usize, c: usize, seed: u64) -> Batch {
        let mut r = rng(seed);
        let mut x = Batch::zeros(b, t, c);
        x.data.iter_mut().for_each(|v| *v = r.gen_range(-1.5..1.5));
        x
    }

    #[test]
    fn dense_matches_finite_differences() {
        let mut r = rng(1);
        let mut layer = Dense::new("fc", 4, 3, &mut r);
        let x = Matrix::from_vec(2, 4, (0..8).map(|i| 0.3 * i as f64 - 1.0).collect());
        let w = probe_weights(6);

        let _ = layer.forward(&x);
        let dy = Matrix::from_vec(2, 3, w.clone());
        let dx = layer.backward(&dy);

        let probe = |layer: &mut Dense, x: &Matrix| weighted_sum(&layer.forward(x).data, &w);

        for i in [0usize, 3, 7, 11] {
            let analytic = layer.w.grad[i];
            let mut value = layer.w.value.clone();
            let numeric = fd_at(&mut value, i, 1e-6, &mut |v| {
                let mut l = layer.clone();
                l.w.value = v.to_vec();
                probe(&mut l, &x)
            });
            assert_close(analytic, numeric, 1e-6, "dense dW");
        }
        for i in [0usize, 5] {
            let analytic = dx.data[i];
            let mut value = x.data.clone();
            let numeric = fd_at(&mut value, i, 1e-6, &mut |v| {
                let xi = Matrix::from_vec(2, 4, v.to_vec());
                probe(&mut layer.clone(), &xi)
            });
            assert_close(analytic, numeric, 1e-6, "dense dX");
        }
    }

    #[test]
    fn conv1d_matches_finite_differences() {
        let mut r = rng(2);
        let mut layer = Conv1d::new("conv", 2, 3, 3, &mut r);
        let x = batch_from(2, 5, 2, 22);
        let w = probe_weights(2 * 5 * 3);

        let _ = layer.forward(&x);
        let dy = Batch { b: 2, t: 5, c: 3, data: w.clone() };
        let dx = layer.backward(&dy);

        let loss = |l: &Conv1d, x: &Batch| {
            let mut l2 = l.clone();
            weighted_sum(&l2.forward(x).data, &w)
        };

        for i in [0usize, 7, 17] {
            let analytic = layer.w.grad[i];
            let mut value = layer.w.value.clone();
            let numeric = fd_at(&mut value, i, 1e-6, &mut |v| {
                let mut l = layer.clone();
                l.w.value = v.to_vec();
                loss(&l, &x)
            });
            assert_close(analytic, numeric, 1e-6, "conv dW");
        }
        for i in [0usize, 9, 19] {
            let analytic = dx.data[i];
            let mut value = x.data.clone();
            let numeric = fd_at(&mut value, i, 1e-6, &mut |v| {
                let xi = Batch { b: 2, t: 5, c: 2, data: v.to_vec() };
                loss(&layer, &xi)
            });
            assert_close(analytic, numeric, 1e-6, "conv dX");
        }
    }

    #[test]
    fn conv1d_matches_framework_golden_values() {
        // Golden outputs from a PyTorch float64 reference run with these
        // exact weights (cross-correlation, zero padding 1).
        let mut conv = Conv1d::new("c", 2, 2, 3, &mut rng(0));
        conv.w.value = vec![
            -0.3125, 0.125, -0.4375, 0.0, 0.4375, -0.125, 0.3125, -0.25, 0.1875, -0.375, 0.0625,
            -0.5,
        ];
        conv.b.value = vec![-1.25, 0.5];
        let x = Batch {
            b: 1,
            t: 4,
            c: 2,
            data: vec![-0.625, 0.25, -0.875, 0.0, 0.875, -0.25, 0.625, -0.5],
        };
        let y = conv.forward(&x);
        let expected = [
            -0.8359375, 0.5078125, -1.515625, 0.71875, -1.1875, 0.359375, -1.6640625, 0.6796875,
        ];
        for (a, e) in y.data.iter().zip(expected) {
            assert!((a - e).abs() < 1e-15, "{a} vs {e}");
        }
    }

    #[test]
    fn batchnorm_matches_framework_golden_values() {
        // Train-mode normalization and running-mean update match a PyTorch
        // float64 run; torch tracks the unbiased running variance while this
        // layer tracks the biased one, so the variances relate by n/(n-1).
        let mut bn = BatchNorm1d::new("bn", 2);
        bn.gamma.value = vec![1.25, 0.75];
        bn.beta.value = vec![0.5, -0.25];
        let x = [-0.625, 0.25, -0.875, 0.0, 0.875, -0.25, 0.625, -0.5, 0.375, -0.75, 0.125, -1.0];
        let y = bn.forward_rows(&x, 6, Mode::Train);
        let expected = [
            -0.89211657974933734,
            0.84785746981803267,
            -1.3834518431902798,
            0.4087144818908196,
            2.0558950008963182,
            -0.030428506036393466,
            1.5645597374553755,
            -0.46957149396360653,
            1.073224474014433,
            -0.9087144818908196,
            0.58188921057349041,
            -1.3478574698180328,
        ];
        for (a, e) in y.iter().zip(expected) {
            assert!((a - e).abs() < 1e-14, "{a} vs {e}");
        }
        let rm_expected = [0.0083333333333333332, -0.037500000000000006];
        for (a, e) in bn.running_mean.iter().zip(rm_expected) {
            assert!((a - e).abs() < 1e-16);
        }
        // running_var (biased) vs torch (unbiased): rv = 0.9 + 0.1 * var,
        // torch_rv = 0.9 + 0.1 * var * 6/5.
        let torch_rv = [0.94854166666666673, 0.921875];
        for (a, t) in bn.running_var.iter().zip(torch_rv) {
            let expected = 0.9 + (t - 0.9) * 5.0 / 6.0;
            assert!((a - expected).abs() < 1e-14, "{a} vs {expected}");
        }
    }

    #[test]
    fn layernorm_matches_framework_golden_values() {
        let mut ln = LayerNorm::new("ln", 4);
        ln.gamma.value = vec![1.5, 0.5, 1.0, 2.0];
        ln.beta.value = vec![0.25, -0.5, 0.0, 1.0];
        let x = Batch {
            b: 1,
            t: 2,
            c: 4,
            data: vec![-0.625, 0.25, -0.875, 0.0, 0.875, -0.25, 0.625, -0.5],
        };
        let y = ln.forward(&x);
        let expected = [
            -0.78017935011242323,
            0.11810761006745396,
            -1.2362152201349079,
            2.3735724668165643,
            2.0396493271934304,
            -0.87962258455618225,
            0.75924516911236439,
            -1.3861991029245737,
        ];
        for (a, e) in y.data.iter().zip(expected) {
            assert!((a - e).abs() < 1e-13, "{a} vs {e}");
        }
    }

    #[test]
    fn conv1d_same_padding_preserves_length() {
        let mut r = rng(3);
        let mut layer = Conv1d::new("conv", 1, 4, 7, &mut r);
        let x = batch_from(1, 10, 1, 4);
        let y = layer.forward(&x);
        assert_eq!((y.b, y.t, y.c), (1, 10, 4));
    }

    #[test]
    fn batchnorm_train_normalizes_and_backprops() {
        let mut bn = BatchNorm1d::new("bn", 2);
        let x = batch_from(3, 4, 2, 7);
        let y = bn.forward_seq(&x, Mode::Train);
        for j in 0..2 {
            let col: Vec<f64> = (0..12).map(|r| y.data[r * 2 + j]).collect();
            assert!(crate::math::mean(&col).abs() < 1e-9);
            assert!((crate::math::variance(&col) - 1.0).abs() < 1e-3);
        }

        let w = probe_weights(24);
        let _ = bn.forward_seq(&x, Mode::Train);
        let dy = Batch { b: 3, t: 4, c: 2, data: w.clone() };
        let dx = bn.backward_seq(&dy);
        for i in [0usize, 11, 23] {
            let analytic = dx.data[i];
            let mut value = x.data.clone();
            let numeric = fd_at(&mut value, i, 1e-6, &mut |v| {
                let mut b2 = bn.clone();
                let xi = Batch { b: 3, t: 4, c: 2, data: v.to_vec() };
                weighted_sum(&b2.forward_seq(&xi, Mode::Train).data, &w)
            });
            assert_close(analytic, numeric, 1e-5, "bn train dX");
        }
    }

    #[test]
    fn batchnorm_eval_uses_running_stats() {
        let mut bn = BatchNorm1d::new("bn", 1);
        let x = batch_from(4, 2, 1, 9);
        let _ = bn.forward_seq(&x, Mode::Train);
        let rm = bn.running_mean.clone();

        let y_eval = bn.forward_seq(&x, Mode::Eval);
        assert_eq!(bn.running_mean, rm, "eval must not update running stats");

        // Eval is a fixed affine map; duplicate inputs give duplicate outputs.
        let y2 = bn.forward_seq(&x, Mode::Eval);
        assert_eq!(y_eval.data, y2.data);

        let w = probe_weights(8);
        let _ = bn.forward_seq(&x, Mode::Eval);
        let dx = bn.backward_seq(&Batch { b: 4, t: 2, c: 1, data: w.clone() });
        for i in [0usize, 5] {
            let mut value = x.data.clone();
            let numeric = fd_at(&mut value, i, 1e-6, &mut |v| {
                let mut b2 = bn.clone();
                let xi = Batch { b: 4, t: 2, c: 1, data: v.to_vec() };
                weighted_sum(&b2.forward_seq(&xi, Mode::Eval).data, &w)
            });
            assert_close(dx.data[i], numeric, 1e-6, "bn eval dX");
        }
    }

    #[test]
    fn maxpool_floors_and_routes_gradients() {
        let mut pool = MaxPool1d::new();
        let mut x = Batch::zeros(1, 5, 1);
        x.data.copy_from_slice(&[1.0, 3.0, 2.0, 2.0, 9.0]);
        let y = pool.forward(&x);
        assert_eq!(y.t, 2, "floor(5/2)");
        assert_eq!(y.data, vec![3.0, 2.0]);

        let dy = Batch { b: 1, t: 2, c: 1, data: vec![1.0, 1.0] };
        let dx = pool.backward(&dy);
        assert_eq!(dx.data, vec![0.0, 1.0, 1.0, 0.0, 0.0]);
    }

    #[test]
    fn dropout_eval_is_identity_and_train_scales() {
        let mut d = Dropout::new(0.5, 42);
        let x = vec![1.0; 1000];
        let y_eval = d.forward(&x, Mode::Eval);
        assert_eq!(y_eval, x);

        let y = d.forward(&x, Mode::Train);
        let kept = y.iter().filter(|&&v| v != 0.0).count();
        assert!(kept > 400 && kept < 600, "kept {kept}");
        // Inverted scaling keeps the expectation.
        let mean = crate::math::mean(&y);
        assert!((mean - 1.0).abs() < 0.1, "mean {mean}");

        let dy = vec![1.0; 1000];
        let dx = d.backward(&dy);
        for (g, v) in dx.iter().zip(&y) {
            assert_eq!(*g == 0.0, *v == 0.0);
        }
    }

    #[test]
    fn gap_is_time_reversal_invariant() {
        let mut gap = GlobalAvgPool::new();
        let x = batch_from(2, 6, 3, 13);
        let mut rev = x.clone();
        for bi in 0..2 {
            for ti in 0..6 {
                for ci in 0..3 {
                    *rev.at_mut(bi, ti, ci) = x.at(bi, 5 - ti, ci);
                }
            }
        }
        let a = gap.forward(&x);
        let b = gap.forward(&rev);
        for (u, v) in a.data.iter().zip(&b.data) {
            assert!((u - v).abs() < 1e-12);
        }

        let dy = Matrix::from_vec(2, 3, probe_weights(6));
        let _ = gap.forward(&x);
        let dx = gap.backward(&dy);
        assert!((dx.at(0, 0, 0) - dy.at(0, 0) / 6.0).abs() < 1e-12);
    }

    #[test]
    fn layernorm_matches_finite_differences() {
        let mut ln = LayerNorm::new("ln", 4);
        let x = batch_from(2, 3, 4, 15);
        let w = probe_weights(24);
        let _ = ln.forward(&x);
        let dx = ln.backward(&Batch { b: 2, t: 3, c: 4, data: w.clone() });
        for i in [0usize, 10, 23] {
            let mut value = x.data.clone();
            let numeric = fd_at(&mut value, i, 1e-6, &mut |v| {
                let mut l2 = ln.clone();
                let xi = Batch { b: 2, t: 3, c: 4, data: v.to_vec() };
                weighted_sum(&l2.forward(&xi).data, &w)
            });
            assert_close(dx.data[i], numeric, 1e-5, "layernorm dX");
        }
        for i in [0usize, 3] {
            let analytic = ln.gamma.grad[i];
            let mut value = ln.gamma.value.clone();
            let numeric = fd_at(&mut value, i, 1e-6, &mut |v| {
                let mut l2 = ln.clone();
                l2.gamma.value = v.to_vec();
                weighted_sum(&l2.forward(&x).data, &w)
            });
            assert_close(analytic, numeric, 1e-5, "layernorm dGamma");
        }
    }
}
