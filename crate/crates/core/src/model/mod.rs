//! The model zoo: six regressor families behind one build/forward contract.
//!
//! Every family consumes `[batch, window_len, n_channels]` windows and emits
//! one scalar per window; the transformer additionally produces per-time-step
//! predictions, reduced to the final step for the shared contract. Builds are
//! seeded and deterministic: the same `(spec, n_channels, window_len, seed)`
//! always yields identical initial parameters.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math;
use crate::nn::{Mode, Param};
use crate::tensor::{Batch, Matrix};

mod cnn;
mod linreg;
mod lstm_net;
mod resnet;
mod transformer;

pub use linreg::{fit_linear_regression_closed_form, LsFit};

// ── Specs ────────────────────────────────────────────────────────────────────

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ModelFamily {
    LinReg,
    Cnn,
    Lstm,
    ResNet,
    ResNetAttention,
    Transformer,
}

impl ModelFamily {
    pub const ALL: [ModelFamily; 6] = [
        Self::LinReg,
        Self::Cnn,
        Self::Lstm,
        Self::ResNet,
        Self::ResNetAttention,
        Self::Transformer,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::LinReg => "linreg",
            Self::Cnn => "cnn",
            Self::Lstm => "lstm",
            Self::ResNet => "resnet",
            Self::ResNetAttention => "resnet_attention",
            Self::Transformer => "transformer",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "linreg" => Ok(Self::LinReg),
            "cnn" => Ok(Self::Cnn),
            "lstm" => Ok(Self::Lstm),
            "resnet" => Ok(Self::ResNet),
            "resnet_attention" | "resatt" => Ok(Self::ResNetAttention),
            "transformer" => Ok(Self::Transformer),
            _ => Err(Error::Config(format!("unknown model family '{s}'"))),
        }
    }
}

impl core::fmt::Display for ModelFamily {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CnnConfig {
    /// Filters of the three conv blocks.
    pub filters: [usize; 3],
    pub kernel: usize,
    /// Width of the hidden dense layer.
    pub fc: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LstmConfig {
    /// Hidden sizes of the two stacked layers.
    pub hidden: [usize; 2],
    /// Width of the dense layer after flattening.
    pub fc: usize,
    /// Regress from the final hidden state instead of all flattened steps.
    pub final_state_only: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResNetConfig {
    pub stem_filters: usize,
    pub stem_kernel: usize,
    /// Output channels of the three residual blocks.
    pub block_channels: [usize; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransformerConfig {
    pub d_model: usize,
    pub heads: usize,
    pub ff_dim: usize,
    pub layers: usize,
    /// Hidden width of the two-layer output head.
    pub head_hidden: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ArchConfig {
    LinReg,
    Cnn(CnnConfig),
    Lstm(LstmConfig),
    ResNet(ResNetConfig),
    ResNetAttention(ResNetConfig),
    Transformer(TransformerConfig),
}

/// Architecture family plus hyperparameters. `standard()` carries the
/// published defaults; overrides are recorded in every report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub family: ModelFamily,
    pub window_len: usize,
    /// Unused by the closed-form linear regression (kept at 0).
    pub batch_size: usize,
    pub learning_rate: f64,
    pub dropout: f64,
    pub arch: ArchConfig,
    /// Transformer only: train on the per-step loss instead of the final step.
    pub per_step_loss: bool,
}

impl ModelSpec {
    /// Published hyperparameters per family.
    pub fn standard(family: ModelFamily) -> Self {
        match family {
            ModelFamily::LinReg => Self {
                family,
                window_len: 1,
                batch_size: 0,
                learning_rate: 0.0,
                dropout: 0.0,
                arch: ArchConfig::LinReg,
                per_step_loss: false,
            },
            ModelFamily::Cnn => Self {
                family,
                window_len: 20,
                batch_size: 8,
                learning_rate: 5e-4,
                dropout: 0.3,
                arch: ArchConfig::Cnn(CnnConfig { filters: [64, 32, 16], kernel: 3, fc: 40 }),
                per_step_loss: false,
            },
            ModelFamily::Lstm => Self {
                family,
                window_len: 20,
                batch_size: 32,
                learning_rate: 5e-4,
                dropout: 0.3,
                arch: ArchConfig::Lstm(LstmConfig {
                    hidden: [128, 64],
                    fc: 64,
                    final_state_only: false,
                }),
                per_step_loss: false,
            },
            ModelFamily::ResNet => Self {
                family,
                window_len: 10,
                batch_size: 32,
                learning_rate: 1e-3,
                dropout: 0.0,
                arch: ArchConfig::ResNet(ResNetConfig {
                    stem_filters: 64,
                    stem_kernel: 7,
                    block_channels: [128, 256, 512],
                }),
                per_step_loss: false,
            },
            ModelFamily::ResNetAttention => Self {
                family,
                window_len: 10,
                batch_size: 8,
                learning_rate: 5e-4,
                dropout: 0.0,
                arch: ArchConfig::ResNetAttention(ResNetConfig {
                    stem_filters: 64,
                    stem_kernel: 7,
                    block_channels: [128, 256, 512],
                }),
                per_step_loss: false,
            },
            ModelFamily::Transformer => Self {
                family,
                window_len: 10,
                batch_size: 4,
                learning_rate: 9e-4,
                dropout: 0.0,
                arch: ArchConfig::Transformer(TransformerConfig {
                    d_model: 64,
                    heads: 8,
                    ff_dim: 256,
                    layers: 2,
                    head_hidden: 32,
                }),
                per_step_loss: false,
            },
        }
    }

    /// Narrow variants for gradient checks and fast tests; same structure,
    /// small widths.
    pub fn toy(family: ModelFamily) -> Self {
        let mut spec = Self::standard(family);
        spec.dropout = 0.0;
        match family {
            ModelFamily::LinReg => {}
            ModelFamily::Cnn => {
                spec.window_len = 8;
                spec.arch = ArchConfig::Cnn(CnnConfig { filters: [4, 3, 2], kernel: 3, fc: 5 });
            }
            ModelFamily::Lstm => {
                spec.window_len = 6;
                spec.arch = ArchConfig::Lstm(LstmConfig {
                    hidden: [6, 5],
                    fc: 7,
                    final_state_only: false,
                });
            }
            ModelFamily::ResNet | ModelFamily::ResNetAttention => {
                spec.window_len = 8;
                let cfg = ResNetConfig { stem_filters: 4, stem_kernel: 7, block_channels: [5, 6, 7] };
                spec.arch = if family == ModelFamily::ResNet {
                    ArchConfig::ResNet(cfg)
                } else {
                    ArchConfig::ResNetAttention(cfg)
                };
            }
            ModelFamily::Transformer => {
                spec.window_len = 6;
                spec.arch = ArchConfig::Transformer(TransformerConfig {
                    d_model: 8,
                    heads: 2,
                    ff_dim: 16,
                    layers: 2,
                    head_hidden: 6,
                });
            }
        }
        spec
    }
}

// ── Positional encoding ──────────────────────────────────────────────────────

/// Sinusoidal positional encoding: `PE[pos, 2i] = sin(pos / 10000^(2i/d))`,
/// `PE[pos, 2i+1] = cos(pos / 10000^(2i/d))`.
pub fn positional_encoding(seq_len: usize, d_model: usize) -> Result<Matrix> {
    if d_model == 0 || d_model % 2 != 0 {
        return Err(Error::Build(format!(
            "positional encoding requires an even model dimension, got {d_model}"
        )));
    }
    let mut pe = Matrix::zeros(seq_len, d_model);
    for pos in 0..seq_len {
        for i in 0..d_model / 2 {
            let angle = pos as f64 / math::powf(10000.0, (2 * i) as f64 / d_model as f64);
            *pe.at_mut(pos, 2 * i) = math::sin(angle);
            *pe.at_mut(pos, 2 * i + 1) = math::cos(angle);
        }
    }
    Ok(pe)
}

// ── Instances ────────────────────────────────────────────────────────────────

/// Forward output: one scalar per window; per-step predictions when the
/// family produces them.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub scalar: Vec<f64>,
    pub per_step: Option<Matrix>,
}

/// Gradient of the loss w.r.t. the prediction, matching `Prediction`.
#[derive(Debug)]
pub enum PredictionGrad<'a> {
    Scalar(&'a [f64]),
    PerStep(&'a Matrix),
}

pub(crate) enum Net {
    LinReg(linreg::LinRegNet),
    Cnn(cnn::CnnNet),
    Lstm(lstm_net::LstmNet),
    ResNet(resnet::ResNetNet),
    Transformer(transformer::TransformerNet),
}

/// A built (possibly trained) regressor: parameter collection plus the spec
/// and input arity it was constructed for.
pub struct ModelInstance {
    pub spec: ModelSpec,
    pub n_channels: usize,
    pub window_len: usize,
    pub(crate) net: Net,
}

/// Construct a model for the given input arity. Seeded and deterministic.
pub fn build_model(
    spec: &ModelSpec,
    n_channels: usize,
    window_len: usize,
    seed: u64,
) -> Result<ModelInstance> {
    if n_channels == 0 || window_len == 0 {
        return Err(Error::Build("input arity must be non-zero".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let net = match (&spec.arch, spec.family) {
        (ArchConfig::LinReg, ModelFamily::LinReg) => {
            Net::LinReg(linreg::LinRegNet::new(n_channels, window_len, &mut rng))
        }
        (ArchConfig::Cnn(cfg), ModelFamily::Cnn) => {
            Net::Cnn(cnn::CnnNet::new(cfg, spec.dropout, n_channels, window_len, &mut rng)?)
        }
        (ArchConfig::Lstm(cfg), ModelFamily::Lstm) => {
            Net::Lstm(lstm_net::LstmNet::new(cfg, spec.dropout, n_channels, window_len, &mut rng))
        }
        (ArchConfig::ResNet(cfg), ModelFamily::ResNet) => Net::ResNet(resnet::ResNetNet::new(
            cfg,
            false,
            n_channels,
            window_len,
            &mut rng,
        )?),
        (ArchConfig::ResNetAttention(cfg), ModelFamily::ResNetAttention) => Net::ResNet(
            resnet::ResNetNet::new(cfg, true, n_channels, window_len, &mut rng)?,
        ),
        (ArchConfig::Transformer(cfg), ModelFamily::Transformer) => Net::Transformer(
            transformer::TransformerNet::new(cfg, n_channels, window_len, &mut rng)?,
        ),
        _ => {
            return Err(Error::Build(format!(
                "architecture config does not match family '{}'",
                spec.family
            )))
        }
    };
    Ok(ModelInstance { spec: spec.clone(), n_channels, window_len, net })
}

impl ModelInstance {
    fn check_batch(&self, x: &Batch) -> Result<()> {
        if x.t != self.window_len || x.c != self.n_channels {
            return Err(Error::Contract(format!(
                "batch shape [{}, {}, {}] does not match instance arity [_, {}, {}]",
                x.b, x.t, x.c, self.window_len, self.n_channels
            )));
        }
        Ok(())
    }

    pub fn forward(&mut self, x: &Batch, mode: Mode) -> Result<Prediction> {
        self.check_batch(x)?;
        Ok(match &mut self.net {
            Net::LinReg(n) => n.forward(x),
            Net::Cnn(n) => n.forward(x, mode),
            Net::Lstm(n) => n.forward(x, mode),
            Net::ResNet(n) => n.forward(x, mode),
            Net::Transformer(n) => n.forward(x, mode),
        })
    }

    /// Accumulate parameter gradients from the prediction gradient. Only the
    /// transformer accepts per-step gradients.
    pub fn backward(&mut self, grad: &PredictionGrad<'_>) -> Result<()> {
        match (&mut self.net, grad) {
            (Net::LinReg(n), PredictionGrad::Scalar(d)) => n.backward(d),
            (Net::Cnn(n), PredictionGrad::Scalar(d)) => n.backward(d),
            (Net::Lstm(n), PredictionGrad::Scalar(d)) => n.backward(d),
            (Net::ResNet(n), PredictionGrad::Scalar(d)) => n.backward(d),
            (Net::Transformer(n), PredictionGrad::Scalar(d)) => n.backward_scalar(d),
            (Net::Transformer(n), PredictionGrad::PerStep(d)) => n.backward_steps(d),
            _ => {
                return Err(Error::Contract(
                    "per-step gradients are only defined for the transformer".into(),
                ))
            }
        }
        Ok(())
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        match &mut self.net {
            Net::LinReg(n) => n.params_mut(),
            Net::Cnn(n) => n.params_mut(),
            Net::Lstm(n) => n.params_mut(),
            Net::ResNet(n) => n.params_mut(),
            Net::Transformer(n) => n.params_mut(),
        }
    }

    /// Named non-parameter state (batch-norm running statistics).
    pub fn buffers_mut(&mut self) -> Vec<(String, &mut Vec<f64>)> {
        match &mut self.net {
            Net::LinReg(_) | Net::Transformer(_) => vec![],
            Net::Cnn(n) => n.buffers_mut(),
            Net::Lstm(n) => n.buffers_mut(),
            Net::ResNet(n) => n.buffers_mut(),
        }
    }

    pub fn zero_grad(&mut self) {
        for p in self.params_mut() {
            p.zero_grad();
        }
    }

    pub fn param_count(&mut self) -> usize {
        self.params_mut().iter().map(|p| p.len()).sum()
    }

    /// Snapshot of all parameter values and buffers, in deterministic order.
    pub fn state_values(&mut self) -> Vec<Vec<f64>> {
        let mut out: Vec<Vec<f64>> = self.params_mut().iter().map(|p| p.value.clone()).collect();
        out.extend(self.buffers_mut().into_iter().map(|(_, b)| b.clone()));
        out
    }

    pub fn set_state_values(&mut self, values: &[Vec<f64>]) -> Result<()> {
        let n_params = self.params_mut().len();
        let n_buffers = self.buffers_mut().len();
        if values.len() != n_params + n_buffers {
            return Err(Error::Contract("state snapshot cardinality mismatch".into()));
        }
        for (p, v) in self.params_mut().iter_mut().zip(&values[..n_params]) {
            if p.len() != v.len() {
                return Err(Error::Contract(format!("parameter '{}' length mismatch", p.name)));
            }
            p.value.copy_from_slice(v);
        }
        for ((name, b), v) in self.buffers_mut().into_iter().zip(&values[n_params..]) {
            if b.len() != v.len() {
                return Err(Error::Contract(format!("buffer '{name}' length mismatch")));
            }
            b.copy_from_slice(v);
        }
        Ok(())
    }

    /// Named parameter and buffer tensors for checkpointing.
    pub fn named_values(&mut self) -> Vec<(String, Vec<f64>)> {
        let mut out: Vec<(String, Vec<f64>)> =
            self.params_mut().iter().map(|p| (p.name.clone(), p.value.clone())).collect();
        out.extend(self.buffers_mut().into_iter().map(|(name, b)| (name, b.clone())));
        out
    }

    /// Load parameters and buffers by name; every tensor must be present with
    /// its exact length.
    pub fn load_named(&mut self, entries: &BTreeMap<String, Vec<f64>>) -> Result<()> {
        for p in self.params_mut() {
            let v = entries
                .get(&p.name)
                .ok_or_else(|| Error::Contract(format!("checkpoint is missing '{}'", p.name)))?;
            if v.len() != p.len() {
                return Err(Error::Contract(format!(
                    "checkpoint tensor '{}' has {} values, expected {}",
                    p.name,
                    v.len(),
                    p.len()
                )));
            }
            p.value.copy_from_slice(v);
        }
        for (name, b) in self.buffers_mut() {
            let v = entries
                .get(&name)
                .ok_or_else(|| Error::Contract(format!("checkpoint is missing '{name}'")))?;
            if v.len() != b.len() {
                return Err(Error::Contract(format!("checkpoint buffer '{name}' length mismatch")));
            }
            b.copy_from_slice(v);
        }
        Ok(())
    }

    /// FNV-1a over the bit patterns of all parameters and buffers, in order.
    pub fn param_checksum(&mut self) -> u64 {
        let mut h: u64 = 0xcbf29ce484222325;
        for values in self.state_values() {
            for v in values {
                for b in v.to_bits().to_le_bytes() {
                    h ^= b as u64;
                    h = h.wrapping_mul(0x100000001b3);
                }
            }
        }
        h
    }

    /// Attention weight rows from the most recent forward pass, flattened with
    /// their row length; empty for families without attention.
    pub fn attention_rows(&self) -> Vec<(Vec<f64>, usize)> {
        match &self.net {
            Net::ResNet(n) => n.attention_rows(),
            Net::Transformer(n) => n.attention_rows(),
            _ => vec![],
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn random_batch(b: usize, t: usize, c: usize, seed: u64) -> Batch {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut x = Batch::zeros(b, t, c);
        x.data.iter_mut().for_each(|v| *v = rng.gen_range(-1.0..1.0));
        x
    }

    #[test]
    fn positional_encoding_closed_form() {
        let pe = positional_encoding(10, 64).unwrap();
        assert_eq!(pe.at(0, 0), 0.0);
        assert_eq!(pe.at(0, 1), 1.0);
        assert!((pe.at(1, 0) - 1.0f64.sin()).abs() < 1e-15);
        // Spot check an interior element against the closed form.
        let angle = 3.0 / 10000.0f64.powf(10.0 / 64.0);
        assert!((pe.at(3, 10) - angle.sin()).abs() < 1e-15);
        assert!((pe.at(3, 11) - angle.cos()).abs() < 1e-15);
        assert!(positional_encoding(10, 7).is_err());
    }

    #[test]
    fn builds_are_seeded_and_deterministic() {
        for family in ModelFamily::ALL {
            let spec = ModelSpec::toy(family);
            let mut a = build_model(&spec, 3, spec.window_len, 42).unwrap();
            let mut b = build_model(&spec, 3, spec.window_len, 42).unwrap();
            assert_eq!(a.state_values(), b.state_values(), "{family}");
            let mut c = build_model(&spec, 3, spec.window_len, 43).unwrap();
            assert_ne!(a.state_values(), c.state_values(), "{family} seed insensitivity");
        }
    }

    #[test]
    fn forward_shapes_per_family() {
        for family in ModelFamily::ALL {
            let spec = ModelSpec::toy(family);
            let mut m = build_model(&spec, 2, spec.window_len, 7).unwrap();
            let x = random_batch(3, spec.window_len, 2, 11);
            let pred = m.forward(&x, Mode::Eval).unwrap();
            assert_eq!(pred.scalar.len(), 3, "{family}");
            assert!(pred.scalar.iter().all(|v| v.is_finite()), "{family}");
            if family == ModelFamily::Transformer {
                let steps = pred.per_step.expect("transformer emits per-step output");
                assert_eq!((steps.rows, steps.cols), (3, spec.window_len));
                // Final-step reduction is the shared scalar contract.
                for bi in 0..3 {
                    assert_eq!(steps.at(bi, spec.window_len - 1), pred.scalar[bi]);
                }
            } else {
                assert!(pred.per_step.is_none(), "{family}");
            }
        }
    }

    #[test]
    fn standard_cnn_window_20_has_scalar_head() {
        let spec = ModelSpec::standard(ModelFamily::Cnn);
        let mut m = build_model(&spec, 1, 20, 3).unwrap();
        let x = random_batch(2, 20, 1, 5);
        let pred = m.forward(&x, Mode::Eval).unwrap();
        assert_eq!(pred.scalar.len(), 2);
    }

    #[test]
    fn eval_forward_is_pure() {
        for family in ModelFamily::ALL {
            let spec = ModelSpec::toy(family);
            let mut m = build_model(&spec, 2, spec.window_len, 9).unwrap();
            let x = random_batch(2, spec.window_len, 2, 13);
            // Duplicate the two rows into a four-row batch.
            let mut xx = Batch::zeros(4, spec.window_len, 2);
            xx.data[..x.data.len()].copy_from_slice(&x.data);
            xx.data[x.data.len()..].copy_from_slice(&x.data);
            let a = m.forward(&xx, Mode::Eval).unwrap();
            assert!((a.scalar[0] - a.scalar[2]).abs() < 1e-12, "{family}");
            assert!((a.scalar[1] - a.scalar[3]).abs() < 1e-12, "{family}");
            let b = m.forward(&xx, Mode::Eval).unwrap();
            assert_eq!(a.scalar, b.scalar, "{family} repeat eval");
        }
    }

    #[test]
    fn shape_contract_violations_error() {
        let spec = ModelSpec::toy(ModelFamily::Cnn);
        let mut m = build_model(&spec, 2, spec.window_len, 1).unwrap();
        let bad = random_batch(1, spec.window_len + 1, 2, 3);
        assert!(m.forward(&bad, Mode::Eval).is_err());
        let bad = random_batch(1, spec.window_len, 3, 3);
        assert!(m.forward(&bad, Mode::Eval).is_err());
        // Window too short for three poolings.
        assert!(build_model(&spec, 2, 4, 1).is_err());
    }

    #[test]
    fn bias_only_degenerate_model_is_constant() {
        // Zero every parameter except the output bias: the prediction must be
        // that bias for any input.
        let spec = ModelSpec::toy(ModelFamily::Cnn);
        let mut m = build_model(&spec, 2, spec.window_len, 1).unwrap();
        for p in m.params_mut() {
            p.value.iter_mut().for_each(|v| *v = 0.0);
        }
        let n = m.params_mut().len();
        m.params_mut()[n - 1].value[0] = 2.5;

        let a = m.forward(&random_batch(3, spec.window_len, 2, 1), Mode::Eval).unwrap();
        let b = m.forward(&random_batch(3, spec.window_len, 2, 99), Mode::Eval).unwrap();
        for v in a.scalar.iter().chain(b.scalar.iter()) {
            assert!((v - 2.5).abs() < 1e-12, "expected constant 2.5, got {v}");
        }
    }

    #[test]
    fn param_count_is_deterministic() {
        for family in ModelFamily::ALL {
            let spec = ModelSpec::toy(family);
            let mut a = build_model(&spec, 3, spec.window_len, 0).unwrap();
            let mut b = build_model(&spec, 3, spec.window_len, 99).unwrap();
            assert_eq!(a.param_count(), b.param_count(), "{family}");
            assert!(a.param_count() > 0);
        }
    }

    #[test]
    fn attention_rows_lie_on_simplex() {
        for family in [ModelFamily::ResNetAttention, ModelFamily::Transformer] {
            let spec = ModelSpec::toy(family);
            let mut m = build_model(&spec, 2, spec.window_len, 21).unwrap();
            let x = random_batch(2, spec.window_len, 2, 23);
            m.forward(&x, Mode::Eval).unwrap();
            let rows = m.attention_rows();
            assert!(!rows.is_empty(), "{family} exposes attention weights");
            for (weights, row_len) in rows {
                for row in weights.chunks(row_len) {
                    let s: f64 = row.iter().sum();
                    assert!((s - 1.0).abs() < 1e-6, "{family} row sum {s}");
                    assert!(row.iter().all(|&w| w >= 0.0));
                }
            }
        }
    }

    #[test]
    fn checkpoint_round_trip_is_bit_exact() {
        let spec = ModelSpec::toy(ModelFamily::ResNetAttention);
        let mut m = build_model(&spec, 2, spec.window_len, 77).unwrap();
        let x = random_batch(2, spec.window_len, 2, 31);
        let before = m.forward(&x, Mode::Eval).unwrap();

        let named: BTreeMap<String, Vec<f64>> = m.named_values().into_iter().collect();
        let mut fresh = build_model(&spec, 2, spec.window_len, 1234).unwrap();
        fresh.load_named(&named).unwrap();
        let after = fresh.forward(&x, Mode::Eval).unwrap();
        assert_eq!(before.scalar, after.scalar);
        assert_eq!(m.param_checksum(), fresh.param_checksum());
    }
}
