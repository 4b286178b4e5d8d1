//! Stacked LSTM regressor: two recurrent layers with dropout, flattened
//! outputs through a dense layer, batch norm, dropout, and a linear head.

use alloc::vec::Vec;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::nn::layers::{BatchNorm1d, Dense, Dropout};
use crate::nn::lstm::Lstm;
use crate::nn::{Mode, Param};
use crate::tensor::{Batch, Matrix};

use super::{LstmConfig, Prediction};

pub(crate) struct LstmNet {
    lstm1: Lstm,
    drop1: Dropout,
    lstm2: Lstm,
    drop2: Dropout,
    fc: Dense,
    bn: BatchNorm1d,
    drop3: Dropout,
    out: Dense,
    final_state_only: bool,
    t: usize,
    h2: usize,
}

impl LstmNet {
    pub fn new(
        cfg: &LstmConfig,
        dropout: f64,
        n_channels: usize,
        window_len: usize,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let flat = if cfg.final_state_only { cfg.hidden[1] } else { window_len * cfg.hidden[1] };
        Self {
            lstm1: Lstm::new("lstm.layer1", n_channels, cfg.hidden[0], rng),
            drop1: Dropout::new(dropout, rng.gen()),
            lstm2: Lstm::new("lstm.layer2", cfg.hidden[0], cfg.hidden[1], rng),
            drop2: Dropout::new(dropout, rng.gen()),
            fc: Dense::new("lstm.fc", flat, cfg.fc, rng),
            bn: BatchNorm1d::new("lstm.bn", cfg.fc),
            drop3: Dropout::new(dropout, rng.gen()),
            out: Dense::new("lstm.out", cfg.fc, 1, rng),
            final_state_only: cfg.final_state_only,
            t: window_len,
            h2: cfg.hidden[1],
        }
    }

    pub fn forward(&mut self, x: &Batch, mode: Mode) -> Prediction {
        let mut h1 = self.lstm1.forward(x);
        h1.data = self.drop1.forward(&h1.data, mode);
        let mut h2 = self.lstm2.forward(&h1);
        h2.data = self.drop2.forward(&h2.data, mode);

        let flat = if self.final_state_only {
            let mut m = Matrix::zeros(h2.b, self.h2);
            for bi in 0..h2.b {
                for j in 0..self.h2 {
                    *m.at_mut(bi, j) = h2.at(bi, self.t - 1, j);
                }
            }
            m
        } else {
            h2.flatten()
        };
        let mut z = self.fc.forward(&flat);
        z = self.bn.forward_flat(&z, mode);
        z.data = self.drop3.forward(&z.data, mode);
        let y = self.out.forward(&z);
        Prediction { scalar: y.data, per_step: None }
    }

    pub fn backward(&mut self, d: &[f64]) {
        let dy = Matrix::from_vec(d.len(), 1, d.to_vec());
        let mut dz = self.out.backward(&dy);
        dz.data = self.drop3.backward(&dz.data);
        dz = self.bn.backward_flat(&dz);
        let dflat = self.fc.backward(&dz);

        let b = dflat.rows;
        let mut dh2 = Batch::zeros(b, self.t, self.h2);
        if self.final_state_only {
            for bi in 0..b {
                for j in 0..self.h2 {
                    *dh2.at_mut(bi, self.t - 1, j) = dflat.at(bi, j);
                }
            }
        } else {
            dh2.data.copy_from_slice(&dflat.data);
        }
        dh2.data = self.drop2.backward(&dh2.data);
        let mut dh1 = self.lstm2.backward(&dh2);
        dh1.data = self.drop1.backward(&dh1.data);
        let _ = self.lstm1.backward(&dh1);
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut p = self.lstm1.params_mut();
        p.extend(self.lstm2.params_mut());
        p.extend(self.fc.params_mut());
        p.extend(self.bn.params_mut());
        p.extend(self.out.params_mut());
        p
    }

    pub fn buffers_mut(&mut self) -> Vec<(alloc::string::String, &mut Vec<f64>)> {
        self.bn.buffers_mut()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn final_state_mode_matches_all_steps_width() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let cfg = LstmConfig { hidden: [4, 3], fc: 5, final_state_only: true };
        let mut net = LstmNet::new(&cfg, 0.0, 2, 6, &mut rng);
        let x = Batch::zeros(2, 6, 2);
        let pred = net.forward(&x, Mode::Eval);
        assert_eq!(pred.scalar.len(), 2);
        assert_eq!(net.fc.in_dim, 3);

        let cfg = LstmConfig { hidden: [4, 3], fc: 5, final_state_only: false };
        let net = LstmNet::new(&cfg, 0.0, 2, 6, &mut rng);
        assert_eq!(net.fc.in_dim, 18);
    }
}
