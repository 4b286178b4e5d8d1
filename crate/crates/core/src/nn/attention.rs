//! Scaled dot-product attention over the temporal dimension: a standalone
//! single-sequence kernel, a single-head residual block built from 1x1
//! convolutions, and the multi-head variant used by the encoder.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::math;
use crate::nn::layers::Dense;
use crate::nn::{softmax_rows, softmax_rows_backward, Param};
use crate::tensor::{Batch, Matrix};

/// `softmax(Q K^T / sqrt(d_k)) V` for one sequence. Returns the output and
/// the attention weight matrix (rows on the probability simplex).
pub fn scaled_dot_product_attention(
    q: &Matrix,
    k: &Matrix,
    v: &Matrix,
) -> Result<(Matrix, Matrix)> {
    if q.cols != k.cols {
        return Err(Error::Contract(format!(
            "query dim {} must match key dim {}",
            q.cols, k.cols
        )));
    }
    if k.rows != v.rows {
        return Err(Error::Contract(format!(
            "key rows {} must match value rows {}",
            k.rows, v.rows
        )));
    }
    let scale = 1.0 / math::sqrt(q.cols as f64);
    let mut scores = Matrix::zeros(q.rows, k.rows);
    for i in 0..q.rows {
        for j in 0..k.rows {
            let mut acc = 0.0;
            for d in 0..q.cols {
                acc += q.at(i, d) * k.at(j, d);
            }
            *scores.at_mut(i, j) = acc * scale;
        }
    }
    softmax_rows(&mut scores.data, scores.rows, scores.cols);
    let mut out = Matrix::zeros(q.rows, v.cols);
    for i in 0..q.rows {
        for j in 0..k.rows {
            let a = scores.at(i, j);
            for d in 0..v.cols {
                *out.at_mut(i, d) += a * v.at(j, d);
            }
        }
    }
    Ok((out, scores))
}

// ── Single-head residual block ───────────────────────────────────────────────

#[derive(Debug, Clone)]
struct AttnCache {
    q: Matrix,
    k: Matrix,
    v: Matrix,
    /// Attention weights, `[b][t][t]` flattened.
    attn: Vec<f64>,
    b: usize,
    t: usize,
}

/// Temporal self-attention block: three 1x1 convolutions produce Q, K, V,
/// scaled dot-product attention re-weights V over time, and a residual
/// connection adds the result back onto the input.
#[derive(Debug, Clone)]
pub struct TemporalSelfAttention {
    proj_q: Dense,
    proj_k: Dense,
    proj_v: Dense,
    pub channels: usize,
    cache: Option<AttnCache>,
}

impl TemporalSelfAttention {
    pub fn new(name: &str, channels: usize, rng: &mut ChaCha8Rng) -> Self {
        Self {
            // A 1x1 convolution over time is a per-step dense map.
            proj_q: Dense::new(&format!("{name}.query"), channels, channels, rng),
            proj_k: Dense::new(&format!("{name}.key"), channels, channels, rng),
            proj_v: Dense::new(&format!("{name}.value"), channels, channels, rng),
            channels,
            cache: None,
        }
    }

    pub fn forward(&mut self, x: &Batch) -> Batch {
        debug_assert_eq!(x.c, self.channels);
        let (b, t, c) = (x.b, x.t, x.c);
        let flat = x.flatten_steps();
        let q = self.proj_q.forward(&flat);
        let k = self.proj_k.forward(&flat);
        let v = self.proj_v.forward(&flat);

        let scale = 1.0 / math::sqrt(c as f64);
        let mut attn = vec![0.0; b * t * t];
        let mut y = x.clone();
        for bi in 0..b {
            let scores = &mut attn[bi * t * t..(bi + 1) * t * t];
            for i in 0..t {
                for j in 0..t {
                    let mut acc = 0.0;
                    for d in 0..c {
                        acc += q.at(bi * t + i, d) * k.at(bi * t + j, d);
                    }
                    scores[i * t + j] = acc * scale;
                }
            }
            softmax_rows(scores, t, t);
            for i in 0..t {
                for j in 0..t {
                    let a = scores[i * t + j];
                    for d in 0..c {
                        *y.at_mut(bi, i, d) += a * v.at(bi * t + j, d);
                    }
                }
            }
        }
        self.cache = Some(AttnCache { q, k, v, attn, b, t });
        y
    }

    pub fn backward(&mut self, dy: &Batch) -> Batch {
        let cache = self.cache.take().expect("forward before backward");
        let (b, t, c) = (cache.b, cache.t, self.channels);
        let scale = 1.0 / math::sqrt(c as f64);

        let mut dq = Matrix::zeros(b * t, c);
        let mut dk = Matrix::zeros(b * t, c);
        let mut dv = Matrix::zeros(b * t, c);
        for bi in 0..b {
            let attn = &cache.attn[bi * t * t..(bi + 1) * t * t];
            // dA and dV from the re-weighting.
            let mut dattn = vec![0.0; t * t];
            for i in 0..t {
                for j in 0..t {
                    let mut acc = 0.0;
                    for d in 0..c {
                        acc += dy.at(bi, i, d) * cache.v.at(bi * t + j, d);
                    }
                    dattn[i * t + j] = acc;
                    let a = attn[i * t + j];
                    for d in 0..c {
                        *dv.at_mut(bi * t + j, d) += a * dy.at(bi, i, d);
                    }
                }
            }
            let mut dscores = vec![0.0; t * t];
            softmax_rows_backward(attn, &dattn, t, t, &mut dscores);
            for i in 0..t {
                for j in 0..t {
                    let g = dscores[i * t + j] * scale;
                    for d in 0..c {
                        *dq.at_mut(bi * t + i, d) += g * cache.k.at(bi * t + j, d);
                        *dk.at_mut(bi * t + j, d) += g * cache.q.at(bi * t + i, d);
                    }
                }
            }
        }

        let dx_q = self.proj_q.backward(&dq);
        let dx_k = self.proj_k.backward(&dk);
        let dx_v = self.proj_v.backward(&dv);
        // Residual path plus the three projection paths.
        let mut dx = dy.clone();
        for (i, v) in dx.data.iter_mut().enumerate() {
            *v += dx_q.data[i] + dx_k.data[i] + dx_v.data[i];
        }
        dx
    }

    /// Attention weights from the last forward pass, `[b][t][t]` flattened.
    pub fn last_attention(&self) -> Option<(&[f64], usize)> {
        self.cache.as_ref().map(|c| (c.attn.as_slice(), c.t))
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut p = self.proj_q.params_mut();
        p.extend(self.proj_k.params_mut());
        p.extend(self.proj_v.params_mut());
        p
    }
}

// ── Multi-head self-attention ────────────────────────────────────────────────

#[derive(Debug, Clone)]
struct MhaCache {
    q: Matrix,
    k: Matrix,
    v: Matrix,
    /// `[b][head][t][t]` flattened.
    attn: Vec<f64>,
    b: usize,
    t: usize,
}

/// Multi-head scaled dot-product self-attention on `[b, t, d_model]`.
#[derive(Debug, Clone)]
pub struct MultiHeadSelfAttention {
    proj_q: Dense,
    proj_k: Dense,
    proj_v: Dense,
    proj_out: Dense,
    pub d_model: usize,
    pub heads: usize,
    head_dim: usize,
    cache: Option<MhaCache>,
}

impl MultiHeadSelfAttention {
    pub fn new(name: &str, d_model: usize, heads: usize, rng: &mut ChaCha8Rng) -> Result<Self> {
        if d_model % heads != 0 {
            return Err(Error::Build(format!(
                "d_model {d_model} is not divisible by {heads} heads"
            )));
        }
        Ok(Self {
            proj_q: Dense::new(&format!("{name}.query"), d_model, d_model, rng),
            proj_k: Dense::new(&format!("{name}.key"), d_model, d_model, rng),
            proj_v: Dense::new(&format!("{name}.value"), d_model, d_model, rng),
            proj_out: Dense::new(&format!("{name}.out"), d_model, d_model, rng),
            d_model,
            heads,
            head_dim: d_model / heads,
            cache: None,
        })
    }

    pub fn forward(&mut self, x: &Batch) -> Batch {
        debug_assert_eq!(x.c, self.d_model);
        let (b, t, d, hd) = (x.b, x.t, self.d_model, self.head_dim);
        let flat = x.flatten_steps();
        let q = self.proj_q.forward(&flat);
        let k = self.proj_k.forward(&flat);
        let v = self.proj_v.forward(&flat);

        let scale = 1.0 / math::sqrt(hd as f64);
        let mut attn = vec![0.0; b * self.heads * t * t];
        let mut ctx = Matrix::zeros(b * t, d);
        for bi in 0..b {
            for h in 0..self.heads {
                let col0 = h * hd;
                let a_off = (bi * self.heads + h) * t * t;
                let scores = &mut attn[a_off..a_off + t * t];
                for i in 0..t {
                    for j in 0..t {
                        let mut acc = 0.0;
                        for d_i in 0..hd {
                            acc += q.at(bi * t + i, col0 + d_i) * k.at(bi * t + j, col0 + d_i);
                        }
                        scores[i * t + j] = acc * scale;
                    }
                }
                softmax_rows(scores, t, t);
                for i in 0..t {
                    for j in 0..t {
                        let a = scores[i * t + j];
                        for d_i in 0..hd {
                            *ctx.at_mut(bi * t + i, col0 + d_i) += a * v.at(bi * t + j, col0 + d_i);
                        }
                    }
                }
            }
        }
        let out = self.proj_out.forward(&ctx);
        self.cache = Some(MhaCache { q, k, v, attn, b, t });
        Batch { b, t, c: d, data: out.data }
    }

    pub fn backward(&mut self, dy: &Batch) -> Batch {
        let cache = self.cache.take().expect("forward before backward");
        let (b, t, d, hd) = (cache.b, cache.t, self.d_model, self.head_dim);
        let scale = 1.0 / math::sqrt(hd as f64);

        let dy_flat = Matrix { rows: b * t, cols: d, data: dy.data.clone() };
        let dctx = self.proj_out.backward(&dy_flat);

        let mut dq = Matrix::zeros(b * t, d);
        let mut dk = Matrix::zeros(b * t, d);
        let mut dv = Matrix::zeros(b * t, d);
        for bi in 0..b {
            for h in 0..self.heads {
                let col0 = h * hd;
                let a_off = (bi * self.heads + h) * t * t;
                let attn = &cache.attn[a_off..a_off + t * t];
                let mut dattn = vec![0.0; t * t];
                for i in 0..t {
                    for j in 0..t {
                        let mut acc = 0.0;
                        for d_i in 0..hd {
                            acc += dctx.at(bi * t + i, col0 + d_i) * cache.v.at(bi * t + j, col0 + d_i);
                        }
                        dattn[i * t + j] = acc;
                        let a = attn[i * t + j];
                        for d_i in 0..hd {
                            *dv.at_mut(bi * t + j, col0 + d_i) +=
                                a * dctx.at(bi * t + i, col0 + d_i);
                        }
                    }
                }
                let mut dscores = vec![0.0; t * t];
                softmax_rows_backward(attn, &dattn, t, t, &mut dscores);
                for i in 0..t {
                    for j in 0..t {
                        let g = dscores[i * t + j] * scale;
                        for d_i in 0..hd {
                            *dq.at_mut(bi * t + i, col0 + d_i) +=
                                g * cache.k.at(bi * t + j, col0 + d_i);
                            *dk.at_mut(bi * t + j, col0 + d_i) +=
                                g * cache.q.at(bi * t + i, col0 + d_i);
                        }
                    }
                }
            }
        }

        let dx_q = self.proj_q.backward(&dq);
        let dx_k = self.proj_k.backward(&dk);
        let dx_v = self.proj_v.backward(&dv);
        let mut dx = Batch::zeros(b, t, d);
        for i in 0..dx.data.len() {
            dx.data[i] = dx_q.data[i] + dx_k.data[i] + dx_v.data[i];
        }
        dx
    }

    /// Attention weights from the last forward pass, `[b][head][t][t]`.
    pub fn last_attention(&self) -> Option<(&[f64], usize, usize)> {
        self.cache.as_ref().map(|c| (c.attn.as_slice(), self.heads, c.t))
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut p = self.proj_q.params_mut();
        p.extend(self.proj_k.params_mut());
        p.extend(self.proj_v.params_mut());
        p.extend(self.proj_out.params_mut());
        p
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::testutil::{assert_close, fd_at, probe_weights, weighted_sum};
    use rand::{Rng, SeedableRng};

    #[test]
    fn sdpa_identity_hand_example() {
        // Q = K = V = I(2x2), d_k = 2: score rows are [1/sqrt(2), 0] and
        // [0, 1/sqrt(2)] before softmax.
        let eye = Matrix::from_vec(2, 2, vec![1.0, 0.0, 0.0, 1.0]);
        let (out, w) = scaled_dot_product_attention(&eye, &eye, &eye).unwrap();
        let s = 1.0 / 2.0f64.sqrt();
        let e = s.exp();
        let w00 = e / (e + 1.0);
        assert!((w.at(0, 0) - w00).abs() < 1e-12);
        assert!((w.at(0, 1) - (1.0 - w00)).abs() < 1e-12);
        assert!((out.at(0, 0) - w00).abs() < 1e-12);
        assert!((out.at(1, 1) - w00).abs() < 1e-12);
    }

    #[test]
    fn sdpa_constant_values_dominate() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let rand = |r: &mut ChaCha8Rng, n: usize| (0..n).map(|_| r.gen_range(-2.0..2.0)).collect();
        let q = Matrix::from_vec(3, 2, rand(&mut rng, 6));
        let k = Matrix::from_vec(3, 2, rand(&mut rng, 6));
        let v = Matrix::from_vec(3, 2, vec![5.0, -1.0, 5.0, -1.0, 5.0, -1.0]);
        let (out, w) = scaled_dot_product_attention(&q, &k, &v).unwrap();
        for i in 0..3 {
            assert!((out.at(i, 0) - 5.0).abs() < 1e-12);
            assert!((out.at(i, 1) + 1.0).abs() < 1e-12);
            let sum: f64 = (0..3).map(|j| w.at(i, j)).sum();
            assert!((sum - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn sdpa_rescaled_keys_keep_outputs_convex() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let rand = |r: &mut ChaCha8Rng, n: usize| -> Vec<f64> {
            (0..n).map(|_| r.gen_range(-1.0..1.0)).collect()
        };
        let q = Matrix::from_vec(3, 2, rand(&mut rng, 6));
        let k = Matrix::from_vec(3, 2, rand(&mut rng, 6));
        let v = Matrix::from_vec(3, 2, rand(&mut rng, 6));
        let mut k_scaled = k.clone();
        k_scaled.data.iter_mut().for_each(|x| *x *= 3.0);
        let (_, w_a) = scaled_dot_product_attention(&q, &k, &v).unwrap();
        let (out, w_b) = scaled_dot_product_attention(&q, &k_scaled, &v).unwrap();
        assert!(w_a.data != w_b.data, "scaling keys should change the weights");
        // Outputs stay inside the convex hull of the value rows.
        for d in 0..2 {
            let lo = (0..3).map(|j| v.at(j, d)).fold(f64::INFINITY, f64::min);
            let hi = (0..3).map(|j| v.at(j, d)).fold(f64::NEG_INFINITY, f64::max);
            for i in 0..3 {
                assert!(out.at(i, d) >= lo - 1e-12 && out.at(i, d) <= hi + 1e-12);
            }
        }
    }

    #[test]
    fn sdpa_shape_contracts() {
        let a = Matrix::zeros(2, 3);
        let b = Matrix::zeros(2, 2);
        assert!(scaled_dot_product_attention(&a, &b, &b).is_err());
        let v = Matrix::zeros(3, 2);
        assert!(scaled_dot_product_attention(&b, &b, &v).is_err());
    }

    #[test]
    fn temporal_attention_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let mut block = TemporalSelfAttention::new("attn", 3, &mut rng);
        let mut x = Batch::zeros(2, 4, 3);
        x.data.iter_mut().for_each(|v| *v = rng.gen_range(-1.0..1.0));
        let w = probe_weights(2 * 4 * 3);

        let _ = block.forward(&x);
        let dy = Batch { b: 2, t: 4, c: 3, data: w.clone() };
        let dx = block.backward(&dy);

        for i in [0usize, 11, 23] {
            let mut value = x.data.clone();
            let numeric = fd_at(&mut value, i, 1e-6, &mut |v| {
                let mut b2 = block.clone();
                let xi = Batch { b: 2, t: 4, c: 3, data: v.to_vec() };
                weighted_sum(&b2.forward(&xi).data, &w)
            });
            assert_close(dx.data[i], numeric, 1e-5, "temporal attn dX");
        }
        let gq = block.proj_q.w.grad.clone();
        for i in [0usize, 4, 8] {
            let mut value = block.proj_q.w.value.clone();
            let numeric = fd_at(&mut value, i, 1e-6, &mut |v| {
                let mut b2 = block.clone();
                b2.proj_q.w.value = v.to_vec();
                weighted_sum(&b2.forward(&x).data, &w)
            });
            assert_close(gq[i], numeric, 1e-5, "temporal attn dWq");
        }
    }

    #[test]
    fn mha_rows_sum_to_one_and_backprops() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut mha = MultiHeadSelfAttention::new("mha", 4, 2, &mut rng).unwrap();
        let mut x = Batch::zeros(2, 3, 4);
        x.data.iter_mut().for_each(|v| *v = rng.gen_range(-1.0..1.0));
        let _ = mha.forward(&x);
        let (attn, heads, t) = mha.last_attention().unwrap();
        assert_eq!(heads, 2);
        for chunk in attn.chunks(t) {
            let s: f64 = chunk.iter().sum();
            assert!((s - 1.0).abs() < 1e-6);
        }

        let w = probe_weights(2 * 3 * 4);
        let _ = mha.forward(&x);
        let dx = mha.backward(&Batch { b: 2, t: 3, c: 4, data: w.clone() });
        for i in [0usize, 13, 23] {
            let mut value = x.data.clone();
            let numeric = fd_at(&mut value, i, 1e-6, &mut |v| {
                let mut m2 = mha.clone();
                let xi = Batch { b: 2, t: 3, c: 4, data: v.to_vec() };
                weighted_sum(&m2.forward(&xi).data, &w)
            });
            assert_close(dx.data[i], numeric, 1e-5, "mha dX");
        }

        let go = mha.proj_out.w.grad.clone();
        for i in [0usize, 7, 15] {
            let mut value = mha.proj_out.w.value.clone();
            let numeric = fd_at(&mut value, i, 1e-6, &mut |v| {
                let mut m2 = mha.clone();
                m2.proj_out.w.value = v.to_vec();
                weighted_sum(&m2.forward(&x).data, &w)
            });
            assert_close(go[i], numeric, 1e-5, "mha dWo");
        }
    }

    #[test]
    fn mha_matches_framework_golden_values() {
        // Output from a PyTorch float64 MultiheadAttention run; the packed
        // in-projection rows split as [Wq; Wk; Wv].
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut mha = MultiHeadSelfAttention::new("m", 4, 2, &mut rng).unwrap();
        let in_w = [
            -0.3125, 0.125, -0.4375, 0.0, 0.4375, -0.125, 0.3125, -0.25, 0.1875, -0.375, 0.0625,
            -0.5, -0.0625, 0.375, -0.1875, 0.25, -0.3125, 0.125, -0.4375, 0.0, 0.4375, -0.125,
            0.3125, -0.25, 0.1875, -0.375, 0.0625, -0.5, -0.0625, 0.375, -0.1875, 0.25, -0.3125,
            0.125, -0.4375, 0.0, 0.4375, -0.125, 0.3125, -0.25, 0.1875, -0.375, 0.0625, -0.5,
            -0.0625, 0.375, -0.1875, 0.25,
        ];
        let in_b = [-0.5, 0.375, -0.75, 0.125, 1.0, -0.125, 0.75, -0.375, 0.5, -0.625, 0.25, -0.875];
        mha.proj_q.w.value = in_w[0..16].to_vec();
        mha.proj_k.w.value = in_w[16..32].to_vec();
        mha.proj_v.w.value = in_w[32..48].to_vec();
        mha.proj_q.b.value = in_b[0..4].to_vec();
        mha.proj_k.b.value = in_b[4..8].to_vec();
        mha.proj_v.b.value = in_b[8..12].to_vec();
        mha.proj_out.w.value = vec![
            -0.375, 0.0625, -0.5, -0.0625, 0.375, -0.1875, 0.25, -0.3125, 0.125, -0.4375, 0.0,
            -0.5625, -0.125, 0.3125, -0.25, 0.1875,
        ];
        mha.proj_out.b.value = vec![-0.625, 0.25, -0.875, 0.0];

        let x = Batch {
            b: 1,
            t: 3,
            c: 4,
            data: vec![
                -0.625, 0.25, -0.875, 0.0, 0.875, -0.25, 0.625, -0.5, 0.375, -0.75, 0.125, -1.0,
            ],
        };
        let y = mha.forward(&x);
        let expected = [
            -0.98067765077548619,
            0.9071145504580217,
            -0.094586916842151814,
            -0.47897618347531273,
            -0.92558902452319336,
            0.81329749193572876,
            -0.21153232423362378,
            -0.40075920835384082,
            -0.97588785084439778,
            0.8726051246076939,
            -0.15500359157473775,
            -0.44827913466196623,
        ];
        for (a, e) in y.data.iter().zip(expected) {
            assert!((a - e).abs() < 1e-14, "{a} vs {e}");
        }
    }

    #[test]
    fn mha_requires_divisible_heads() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        assert!(MultiHeadSelfAttention::new("mha", 6, 4, &mut rng).is_err());
    }
}
