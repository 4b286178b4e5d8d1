//! Transformer regressor: conv input projection, sinusoidal positional
//! encoding, two post-norm encoder layers, and a two-layer per-step head.

use alloc::format;
use alloc::vec::Vec;

use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::nn::attention::MultiHeadSelfAttention;
use crate::nn::layers::{Conv1d, Dense, LayerNorm, Relu};
use crate::nn::{Mode, Param};
use crate::tensor::{Batch, Matrix};

use super::{positional_encoding, Prediction, TransformerConfig};

struct EncoderLayer {
    mha: MultiHeadSelfAttention,
    ln1: LayerNorm,
    ff1: Dense,
    ff_relu: Relu,
    ff2: Dense,
    ln2: LayerNorm,
}

impl EncoderLayer {
    fn new(name: &str, d_model: usize, heads: usize, ff_dim: usize, rng: &mut ChaCha8Rng) -> Result<Self> {
        Ok(Self {
            mha: MultiHeadSelfAttention::new(&format!("{name}.mha"), d_model, heads, rng)?,
            ln1: LayerNorm::new(&format!("{name}.ln1"), d_model),
            ff1: Dense::new(&format!("{name}.ff1"), d_model, ff_dim, rng),
            ff_relu: Relu::new(),
            ff2: Dense::new(&format!("{name}.ff2"), ff_dim, d_model, rng),
            ln2: LayerNorm::new(&format!("{name}.ln2"), d_model),
        })
    }

    fn forward(&mut self, x: &Batch) -> Batch {
        // Post-norm residual wiring: LN(x + sublayer(x)).
        let a = self.mha.forward(x);
        let mut sum1 = x.clone();
        for (s, v) in sum1.data.iter_mut().zip(&a.data) {
            *s += v;
        }
        let y1 = self.ln1.forward(&sum1);

        let flat = y1.flatten_steps();
        let mut f = self.ff1.forward(&flat);
        f.data = self.ff_relu.forward(&f.data);
        let f = self.ff2.forward(&f);
        let mut sum2 = y1.clone();
        for (s, v) in sum2.data.iter_mut().zip(&f.data) {
            *s += v;
        }
        self.ln2.forward(&sum2)
    }

    fn backward(&mut self, dy: &Batch) -> Batch {
        let d2 = self.ln2.backward(dy);
        // sum2 = y1 + ffn(y1): both paths receive d2.
        let df = Matrix { rows: d2.b * d2.t, cols: d2.c, data: d2.data.clone() };
        let mut dff = self.ff2.backward(&df);
        dff.data = self.ff_relu.backward(&dff.data);
        let dff = self.ff1.backward(&dff);

        let mut dy1 = d2.clone();
        for (a, b) in dy1.data.iter_mut().zip(&dff.data) {
            *a += b;
        }
        let d1 = self.ln1.backward(&dy1);
        let da = self.mha.backward(&d1);
        let mut dx = d1;
        for (a, b) in dx.data.iter_mut().zip(&da.data) {
            *a += b;
        }
        dx
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut p = self.mha.params_mut();
        p.extend(self.ln1.params_mut());
        p.extend(self.ff1.params_mut());
        p.extend(self.ff2.params_mut());
        p.extend(self.ln2.params_mut());
        p
    }
}

pub(crate) struct TransformerNet {
    proj: Conv1d,
    pe: Matrix,
    layers: Vec<EncoderLayer>,
    head1: Dense,
    head_relu: Relu,
    head2: Dense,
    t: usize,
    d_model: usize,
}

impl TransformerNet {
    pub fn new(
        cfg: &TransformerConfig,
        n_channels: usize,
        window_len: usize,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        let pe = positional_encoding(window_len, cfg.d_model)?;
        let proj = Conv1d::new("transformer.proj", n_channels, cfg.d_model, 3, rng);
        let mut layers = Vec::new();
        for i in 0..cfg.layers {
            layers.push(EncoderLayer::new(
                &format!("transformer.enc{}", i + 1),
                cfg.d_model,
                cfg.heads,
                cfg.ff_dim,
                rng,
            )?);
        }
        Ok(Self {
            proj,
            pe,
            layers,
            head1: Dense::new("transformer.head1", cfg.d_model, cfg.head_hidden, rng),
            head_relu: Relu::new(),
            head2: Dense::new("transformer.head2", cfg.head_hidden, 1, rng),
            t: window_len,
            d_model: cfg.d_model,
        })
    }

    pub fn forward(&mut self, x: &Batch, _mode: Mode) -> Prediction {
        let mut h = self.proj.forward(x);
        for bi in 0..h.b {
            for ti in 0..h.t {
                for d in 0..self.d_model {
                    *h.at_mut(bi, ti, d) += self.pe.at(ti, d);
                }
            }
        }
        for layer in &mut self.layers {
            h = layer.forward(&h);
        }
        let flat = h.flatten_steps();
        let mut z = self.head1.forward(&flat);
        z.data = self.head_relu.forward(&z.data);
        let y = self.head2.forward(&z); // [b*t, 1]

        let b = x.b;
        let mut per_step = Matrix::zeros(b, self.t);
        for bi in 0..b {
            for ti in 0..self.t {
                *per_step.at_mut(bi, ti) = y.data[bi * self.t + ti];
            }
        }
        let scalar = (0..b).map(|bi| per_step.at(bi, self.t - 1)).collect();
        Prediction { scalar, per_step: Some(per_step) }
    }

    /// Backward from per-step prediction gradients `[b x t]`.
    pub fn backward_steps(&mut self, d: &Matrix) {
        let b = d.rows;
        let mut dy = Matrix::zeros(b * self.t, 1);
        for bi in 0..b {
            for ti in 0..self.t {
                dy.data[bi * self.t + ti] = d.at(bi, ti);
            }
        }
        let mut dz = self.head2.backward(&dy);
        dz.data = self.head_relu.backward(&dz.data);
        let dflat = self.head1.backward(&dz);
        let mut dh = Batch { b, t: self.t, c: self.d_model, data: dflat.data };
        for layer in self.layers.iter_mut().rev() {
            dh = layer.backward(&dh);
        }
        // The positional encoding is additive, so gradients pass straight through.
        let _ = self.proj.backward(&dh);
    }

    /// Backward from final-step scalar gradients.
    pub fn backward_scalar(&mut self, d: &[f64]) {
        let mut steps = Matrix::zeros(d.len(), self.t);
        for (bi, &g) in d.iter().enumerate() {
            *steps.at_mut(bi, self.t - 1) = g;
        }
        self.backward_steps(&steps);
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut p = self.proj.params_mut();
        for l in &mut self.layers {
            p.extend(l.params_mut());
        }
        p.extend(self.head1.params_mut());
        p.extend(self.head2.params_mut());
        p
    }

    pub fn attention_rows(&self) -> Vec<(Vec<f64>, usize)> {
        self.layers
            .iter()
            .filter_map(|l| l.mha.last_attention())
            .map(|(w, _, t)| (w.to_vec(), t))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    #[test]
    fn per_step_output_has_window_width() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let cfg = TransformerConfig { d_model: 8, heads: 2, ff_dim: 16, layers: 2, head_hidden: 6 };
        let mut net = TransformerNet::new(&cfg, 3, 10, &mut rng).unwrap();
        let mut x = Batch::zeros(4, 10, 3);
        x.data.iter_mut().for_each(|v| *v = rng.gen_range(-1.0..1.0));
        let pred = net.forward(&x, Mode::Eval);
        let steps = pred.per_step.unwrap();
        assert_eq!((steps.rows, steps.cols), (4, 10));
        assert_eq!(pred.scalar.len(), 4);
    }

    #[test]
    fn odd_d_model_is_a_build_error() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let cfg = TransformerConfig { d_model: 7, heads: 1, ff_dim: 8, layers: 1, head_hidden: 4 };
        assert!(TransformerNet::new(&cfg, 2, 6, &mut rng).is_err());
    }
}
