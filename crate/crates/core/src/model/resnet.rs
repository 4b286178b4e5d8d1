//! 1D ResNet regressor: conv stem, three residual blocks with projection
//! skips, optional temporal self-attention, global average pooling, linear
//! head.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::nn::attention::TemporalSelfAttention;
use crate::nn::layers::{BatchNorm1d, Conv1d, Dense, GlobalAvgPool, MaxPool1d, Relu};
use crate::nn::{Mode, Param};
use crate::tensor::Batch;

use super::{Prediction, ResNetConfig};

/// Two conv+bn stages with a skip connection; a 1x1 convolution (plus batch
/// norm) projects the skip whenever channel counts differ.
struct ResBlock {
    conv1: Conv1d,
    bn1: BatchNorm1d,
    relu1: Relu,
    conv2: Conv1d,
    bn2: BatchNorm1d,
    proj: Option<(Conv1d, BatchNorm1d)>,
    relu_out: Relu,
}

impl ResBlock {
    fn new(name: &str, in_ch: usize, out_ch: usize, rng: &mut ChaCha8Rng) -> Self {
        Self {
            conv1: Conv1d::new(&format!("{name}.conv1"), in_ch, out_ch, 3, rng),
            bn1: BatchNorm1d::new(&format!("{name}.bn1"), out_ch),
            relu1: Relu::new(),
            conv2: Conv1d::new(&format!("{name}.conv2"), out_ch, out_ch, 3, rng),
            bn2: BatchNorm1d::new(&format!("{name}.bn2"), out_ch),
            proj: (in_ch != out_ch).then(|| {
                (
                    Conv1d::new(&format!("{name}.proj"), in_ch, out_ch, 1, rng),
                    BatchNorm1d::new(&format!("{name}.proj_bn"), out_ch),
                )
            }),
            relu_out: Relu::new(),
        }
    }

    fn forward(&mut self, x: &Batch, mode: Mode) -> Batch {
        let mut main = self.conv1.forward(x);
        main = self.bn1.forward_seq(&main, mode);
        main.data = self.relu1.forward(&main.data);
        let main = self.conv2.forward(&main);
        let mut main = self.bn2.forward_seq(&main, mode);
        let skip = match &mut self.proj {
            Some((conv, bn)) => {
                let s = conv.forward(x);
                bn.forward_seq(&s, mode)
            }
            None => x.clone(),
        };
        for (m, s) in main.data.iter_mut().zip(&skip.data) {
            *m += s;
        }
        main.data = self.relu_out.forward(&main.data);
        main
    }

    fn backward(&mut self, dy: &Batch) -> Batch {
        let mut d = dy.clone();
        d.data = self.relu_out.backward(&d.data);

        let dskip = match &mut self.proj {
            Some((conv, bn)) => {
                let ds = bn.backward_seq(&d);
                conv.backward(&ds)
            }
            None => d.clone(),
        };

        let dmain = self.bn2.backward_seq(&d);
        let mut dmain = self.conv2.backward(&dmain);
        dmain.data = self.relu1.backward(&dmain.data);
        let dmain = self.bn1.backward_seq(&dmain);
        let mut dx = self.conv1.backward(&dmain);

        for (a, b) in dx.data.iter_mut().zip(&dskip.data) {
            *a += b;
        }
        dx
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut p = self.conv1.params_mut();
        p.extend(self.bn1.params_mut());
        p.extend(self.conv2.params_mut());
        p.extend(self.bn2.params_mut());
        if let Some((conv, bn)) = &mut self.proj {
            p.extend(conv.params_mut());
            p.extend(bn.params_mut());
        }
        p
    }

    fn buffers_mut(&mut self) -> Vec<(alloc::string::String, &mut Vec<f64>)> {
        let mut b = self.bn1.buffers_mut();
        b.extend(self.bn2.buffers_mut());
        if let Some((_, bn)) = &mut self.proj {
            b.extend(bn.buffers_mut());
        }
        b
    }
}

pub(crate) struct ResNetNet {
    stem_conv: Conv1d,
    stem_bn: BatchNorm1d,
    stem_relu: Relu,
    stem_pool: MaxPool1d,
    blocks: Vec<ResBlock>,
    attention: Option<TemporalSelfAttention>,
    gap: GlobalAvgPool,
    head: Dense,
}

impl ResNetNet {
    pub fn new(
        cfg: &ResNetConfig,
        with_attention: bool,
        n_channels: usize,
        window_len: usize,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        if window_len / 2 == 0 {
            return Err(Error::Build(format!(
                "window length {window_len} collapses to zero after the stem pooling"
            )));
        }
        let prefix = if with_attention { "resnet_attention" } else { "resnet" };
        let stem_conv = Conv1d::new(
            &format!("{prefix}.stem.conv"),
            n_channels,
            cfg.stem_filters,
            cfg.stem_kernel,
            rng,
        );
        let stem_bn = BatchNorm1d::new(&format!("{prefix}.stem.bn"), cfg.stem_filters);
        let mut blocks = Vec::new();
        let mut in_ch = cfg.stem_filters;
        for (i, &out_ch) in cfg.block_channels.iter().enumerate() {
            blocks.push(ResBlock::new(&format!("{prefix}.block{}", i + 1), in_ch, out_ch, rng));
            in_ch = out_ch;
        }
        let attention =
            with_attention.then(|| TemporalSelfAttention::new(&format!("{prefix}.attn"), in_ch, rng));
        Ok(Self {
            stem_conv,
            stem_bn,
            stem_relu: Relu::new(),
            stem_pool: MaxPool1d::new(),
            blocks,
            attention,
            gap: GlobalAvgPool::new(),
            head: Dense::new(&format!("{prefix}.head"), in_ch, 1, rng),
        })
    }

    pub fn forward(&mut self, x: &Batch, mode: Mode) -> Prediction {
        let mut h = self.stem_conv.forward(x);
        h = self.stem_bn.forward_seq(&h, mode);
        h.data = self.stem_relu.forward(&h.data);
        let mut h = self.stem_pool.forward(&h);
        for block in &mut self.blocks {
            h = block.forward(&h, mode);
        }
        if let Some(attn) = &mut self.attention {
            h = attn.forward(&h);
        }
        let pooled = self.gap.forward(&h);
        let y = self.head.forward(&pooled);
        Prediction { scalar: y.data, per_step: None }
    }

    pub fn backward(&mut self, d: &[f64]) {
        let dy = crate::tensor::Matrix::from_vec(d.len(), 1, d.to_vec());
        let dpooled = self.head.backward(&dy);
        let mut dh = self.gap.backward(&dpooled);
        if let Some(attn) = &mut self.attention {
            dh = attn.backward(&dh);
        }
        for block in self.blocks.iter_mut().rev() {
            dh = block.backward(&dh);
        }
        let mut dh = self.stem_pool.backward(&dh);
        dh.data = self.stem_relu.backward(&dh.data);
        let dh = self.stem_bn.backward_seq(&dh);
        let _ = self.stem_conv.backward(&dh);
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut p = self.stem_conv.params_mut();
        p.extend(self.stem_bn.params_mut());
        for b in &mut self.blocks {
            p.extend(b.params_mut());
        }
        if let Some(attn) = &mut self.attention {
            p.extend(attn.params_mut());
        }
        p.extend(self.head.params_mut());
        p
    }

    pub fn attention_rows(&self) -> Vec<(Vec<f64>, usize)> {
        match &self.attention {
            Some(attn) => match attn.last_attention() {
                Some((w, t)) => vec![(w.to_vec(), t)],
                None => vec![],
            },
            None => vec![],
        }
    }

    pub fn buffers_mut(&mut self) -> Vec<(alloc::string::String, &mut Vec<f64>)> {
        let mut b = self.stem_bn.buffers_mut();
        for block in &mut self.blocks {
            b.extend(block.buffers_mut());
        }
        b
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn projection_skip_only_when_channels_differ() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let b = ResBlock::new("b", 4, 8, &mut rng);
        assert!(b.proj.is_some());
        let b = ResBlock::new("b", 8, 8, &mut rng);
        assert!(b.proj.is_none());
    }

    #[test]
    fn time_constant_input_is_reversal_invariant() {
        // Global average pooling makes the output invariant to reversing a
        // time-constant input.
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let cfg = ResNetConfig { stem_filters: 4, stem_kernel: 7, block_channels: [5, 6, 7] };
        let mut net = ResNetNet::new(&cfg, false, 2, 8, &mut rng).unwrap();
        let mut x = Batch::zeros(1, 8, 2);
        for ti in 0..8 {
            *x.at_mut(0, ti, 0) = 0.7;
            *x.at_mut(0, ti, 1) = -0.2;
        }
        let mut rev = Batch::zeros(1, 8, 2);
        for ti in 0..8 {
            for ci in 0..2 {
                *rev.at_mut(0, ti, ci) = x.at(0, 7 - ti, ci);
            }
        }
        let a = net.forward(&x, Mode::Eval);
        let b = net.forward(&rev, Mode::Eval);
        assert!((a.scalar[0] - b.scalar[0]).abs() < 1e-12);
    }
}
