//! CNN regressor: three conv blocks (conv -> batch norm -> ReLU -> max pool,
//! dropout in blocks two and three) feeding a dense head.

use alloc::format;
use alloc::vec::Vec;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::nn::layers::{BatchNorm1d, Conv1d, Dense, Dropout, MaxPool1d, Relu};
use crate::nn::{Mode, Param};
use crate::tensor::Batch;

use super::{CnnConfig, Prediction};

struct ConvBlock {
    conv: Conv1d,
    bn: BatchNorm1d,
    relu: Relu,
    pool: MaxPool1d,
    dropout: Option<Dropout>,
}

impl ConvBlock {
    fn forward(&mut self, x: &Batch, mode: Mode) -> Batch {
        let mut h = self.conv.forward(x);
        h = self.bn.forward_seq(&h, mode);
        h.data = self.relu.forward(&h.data);
        let mut h = self.pool.forward(&h);
        if let Some(drop) = &mut self.dropout {
            h.data = drop.forward(&h.data, mode);
        }
        h
    }

    fn backward(&mut self, dy: &Batch) -> Batch {
        let mut d = dy.clone();
        if let Some(drop) = &mut self.dropout {
            d.data = drop.backward(&d.data);
        }
        let mut d = self.pool.backward(&d);
        d.data = self.relu.backward(&d.data);
        let d = self.bn.backward_seq(&d);
        self.conv.backward(&d)
    }
}

pub(crate) struct CnnNet {
    blocks: Vec<ConvBlock>,
    fc: Dense,
    fc_relu: Relu,
    fc_drop: Dropout,
    out: Dense,
    flat_dims: (usize, usize), // (t, c) entering the dense head
}

impl CnnNet {
    pub fn new(
        cfg: &CnnConfig,
        dropout: f64,
        n_channels: usize,
        window_len: usize,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        let mut t = window_len;
        let mut blocks = Vec::new();
        let mut in_ch = n_channels;
        for (i, &filters) in cfg.filters.iter().enumerate() {
            t /= 2;
            if t == 0 {
                return Err(Error::Build(format!(
                    "window length {window_len} is too short for three pooling stages"
                )));
            }
            let name = format!("cnn.block{}", i + 1);
            blocks.push(ConvBlock {
                conv: Conv1d::new(&format!("{name}.conv"), in_ch, filters, cfg.kernel, rng),
                bn: BatchNorm1d::new(&format!("{name}.bn"), filters),
                relu: Relu::new(),
                pool: MaxPool1d::new(),
                dropout: (i > 0).then(|| Dropout::new(dropout, rng.gen())),
            });
            in_ch = filters;
        }
        let flat = t * in_ch;
        Ok(Self {
            blocks,
            fc: Dense::new("cnn.fc", flat, cfg.fc, rng),
            fc_relu: Relu::new(),
            fc_drop: Dropout::new(dropout, rng.gen()),
            out: Dense::new("cnn.out", cfg.fc, 1, rng),
            flat_dims: (t, in_ch),
        })
    }

    pub fn forward(&mut self, x: &Batch, mode: Mode) -> Prediction {
        let mut h = x.clone();
        for block in &mut self.blocks {
            h = block.forward(&h, mode);
        }
        let flat = h.flatten();
        let mut z = self.fc.forward(&flat);
        z.data = self.fc_relu.forward(&z.data);
        z.data = self.fc_drop.forward(&z.data, mode);
        let y = self.out.forward(&z);
        Prediction { scalar: y.data, per_step: None }
    }

    pub fn backward(&mut self, d: &[f64]) {
        let dy = crate::tensor::Matrix::from_vec(d.len(), 1, d.to_vec());
        let mut dz = self.out.backward(&dy);
        dz.data = self.fc_drop.backward(&dz.data);
        dz.data = self.fc_relu.backward(&dz.data);
        let dflat = self.fc.backward(&dz);
        let (t, c) = self.flat_dims;
        let mut dh = Batch { b: dflat.rows, t, c, data: dflat.data };
        for block in self.blocks.iter_mut().rev() {
            dh = block.backward(&dh);
        }
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut p = Vec::new();
        for b in &mut self.blocks {
            p.extend(b.conv.params_mut());
            p.extend(b.bn.params_mut());
        }
        p.extend(self.fc.params_mut());
        p.extend(self.out.params_mut());
        p
    }

    pub fn buffers_mut(&mut self) -> Vec<(alloc::string::String, &mut Vec<f64>)> {
        self.blocks.iter_mut().flat_map(|b| b.bn.buffers_mut()).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_model, ModelFamily, ModelSpec};
    use rand::SeedableRng;

    #[test]
    fn standard_window_20_shrinks_to_two_steps() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let spec = ModelSpec::standard(ModelFamily::Cnn);
        let cfg = match &spec.arch {
            crate::model::ArchConfig::Cnn(c) => c.clone(),
            _ => unreachable!(),
        };
        let net = CnnNet::new(&cfg, 0.3, 5, 20, &mut rng).unwrap();
        // 20 -> 10 -> 5 -> 2 with floor pooling.
        assert_eq!(net.flat_dims, (2, 16));
    }

    #[test]
    fn too_short_window_is_a_build_error() {
        let spec = ModelSpec::standard(ModelFamily::Cnn);
        assert!(build_model(&spec, 1, 7, 0).is_err());
        assert!(build_model(&spec, 1, 8, 0).is_ok());
    }
}
