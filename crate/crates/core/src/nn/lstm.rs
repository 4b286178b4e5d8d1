//! LSTM layer with backpropagation through time.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand_chacha::ChaCha8Rng;

use crate::math;
use crate::nn::Param;
use crate::tensor::Batch;

#[derive(Debug, Clone)]
struct LstmCache {
    x: Batch,
    /// Post-activation gates `[b, t, 4h]` in i, f, g, o order.
    gates: Vec<f64>,
    /// Cell states `[b, t, h]`.
    c: Vec<f64>,
    /// `tanh(c)` per step.
    tanh_c: Vec<f64>,
    /// Hidden outputs `[b, t, h]`.
    h: Vec<f64>,
}

/// Single LSTM layer mapping `[b, t, in] -> [b, t, hidden]`. Input kernels use
/// fan-in uniform init, the recurrent kernel is orthogonal per gate.
#[derive(Debug, Clone)]
pub struct Lstm {
    pub w_ih: Param,
    pub w_hh: Param,
    pub bias: Param,
    pub in_dim: usize,
    pub hidden: usize,
    cache: Option<LstmCache>,
}

impl Lstm {
    pub fn new(name: &str, in_dim: usize, hidden: usize, rng: &mut ChaCha8Rng) -> Self {
        let w_ih = Param::fan_in_uniform(
            format!("{name}.w_ih"),
            vec![4 * hidden, in_dim],
            in_dim,
            rng,
        );
        // Stack one orthogonal block per gate.
        let mut w_hh = Param::zeros(format!("{name}.w_hh"), vec![4 * hidden, hidden]);
        for gate in 0..4 {
            let block = Param::orthogonal(format!("{name}.w_hh.{gate}"), hidden, rng);
            let dst = gate * hidden * hidden;
            w_hh.value[dst..dst + hidden * hidden].copy_from_slice(&block.value);
        }
        let mut bias = Param::zeros(format!("{name}.bias"), vec![4 * hidden]);
        // Forget-gate bias starts at 1 so early training does not flush state.
        bias.value[hidden..2 * hidden].iter_mut().for_each(|b| *b = 1.0);
        Self { w_ih, w_hh, bias, in_dim, hidden, cache: None }
    }

    pub fn forward(&mut self, x: &Batch) -> Batch {
        debug_assert_eq!(x.c, self.in_dim);
        let (b, t, h) = (x.b, x.t, self.hidden);
        let mut gates = vec![0.0; b * t * 4 * h];
        let mut c_all = vec![0.0; b * t * h];
        let mut tanh_c_all = vec![0.0; b * t * h];
        let mut h_all = vec![0.0; b * t * h];

        for bi in 0..b {
            let mut h_prev = vec![0.0; h];
            let mut c_prev = vec![0.0; h];
            for ti in 0..t {
                let x_t = &x.data[(bi * t + ti) * self.in_dim..(bi * t + ti + 1) * self.in_dim];
                let g_off = (bi * t + ti) * 4 * h;
                let s_off = (bi * t + ti) * h;
                // Pre-activations for the four gates.
                for u in 0..4 * h {
                    let mut z = self.bias.value[u];
                    let wi = &self.w_ih.value[u * self.in_dim..(u + 1) * self.in_dim];
                    for (j, &xv) in x_t.iter().enumerate() {
                        z += wi[j] * xv;
                    }
                    let wh = &self.w_hh.value[u * h..(u + 1) * h];
                    for (j, &hv) in h_prev.iter().enumerate() {
                        z += wh[j] * hv;
                    }
                    gates[g_off + u] = z;
                }
                for j in 0..h {
                    let i_g = math::sigmoid(gates[g_off + j]);
                    let f_g = math::sigmoid(gates[g_off + h + j]);
                    let g_g = math::tanh(gates[g_off + 2 * h + j]);
                    let o_g = math::sigmoid(gates[g_off + 3 * h + j]);
                    gates[g_off + j] = i_g;
                    gates[g_off + h + j] = f_g;
                    gates[g_off + 2 * h + j] = g_g;
                    gates[g_off + 3 * h + j] = o_g;
                    let c_new = f_g * c_prev[j] + i_g * g_g;
                    let tc = math::tanh(c_new);
                    c_all[s_off + j] = c_new;
                    tanh_c_all[s_off + j] = tc;
                    h_all[s_off + j] = o_g * tc;
                }
                h_prev.copy_from_slice(&h_all[s_off..s_off + h]);
                c_prev.copy_from_slice(&c_all[s_off..s_off + h]);
            }
        }

        let out = Batch { b, t, c: h, data: h_all.clone() };
        self.cache = Some(LstmCache { x: x.clone(), gates, c: c_all, tanh_c: tanh_c_all, h: h_all });
        out
    }

    pub fn backward(&mut self, dy: &Batch) -> Batch {
        let cache = self.cache.take().expect("forward before backward");
        let (b, t, h) = (cache.x.b, cache.x.t, self.hidden);
        debug_assert_eq!((dy.b, dy.t, dy.c), (b, t, h));
        let mut dx = Batch::zeros(b, t, self.in_dim);

        for bi in 0..b {
            let mut dh_next = vec![0.0; h];
            let mut dc_next = vec![0.0; h];
            for ti in (0..t).rev() {
                let g_off = (bi * t + ti) * 4 * h;
                let s_off = (bi * t + ti) * h;
                let x_t = &cache.x.data
                    [(bi * t + ti) * self.in_dim..(bi * t + ti + 1) * self.in_dim];
                let (h_prev, c_prev): (&[f64], &[f64]) = if ti == 0 {
                    (&[], &[])
                } else {
                    let p_off = (bi * t + ti - 1) * h;
                    (&cache.h[p_off..p_off + h], &cache.c[p_off..p_off + h])
                };

                let mut dz = vec![0.0; 4 * h];
                for j in 0..h {
                    let i_g = cache.gates[g_off + j];
                    let f_g = cache.gates[g_off + h + j];
                    let g_g = cache.gates[g_off + 2 * h + j];
                    let o_g = cache.gates[g_off + 3 * h + j];
                    let tc = cache.tanh_c[s_off + j];
                    let cp = if ti == 0 { 0.0 } else { c_prev[j] };

                    let dh = dy.data[(bi * t + ti) * h + j] + dh_next[j];
                    let do_g = dh * tc;
                    let dc = dh * o_g * (1.0 - tc * tc) + dc_next[j];
                    let di = dc * g_g;
                    let dg = dc * i_g;
                    let df = dc * cp;
                    dc_next[j] = dc * f_g;

                    dz[j] = di * i_g * (1.0 - i_g);
                    dz[h + j] = df * f_g * (1.0 - f_g);
                    dz[2 * h + j] = dg * (1.0 - g_g * g_g);
                    dz[3 * h + j] = do_g * o_g * (1.0 - o_g);
                }

                dh_next.iter_mut().for_each(|v| *v = 0.0);
                for u in 0..4 * h {
                    let g = dz[u];
                    if g == 0.0 {
                        continue;
                    }
                    self.bias.grad[u] += g;
                    let wi_grad = &mut self.w_ih.grad[u * self.in_dim..(u + 1) * self.in_dim];
                    for (j, &xv) in x_t.iter().enumerate() {
                        wi_grad[j] += g * xv;
                    }
                    let wi = &self.w_ih.value[u * self.in_dim..(u + 1) * self.in_dim];
                    let dx_t = &mut dx.data
                        [(bi * t + ti) * self.in_dim..(bi * t + ti + 1) * self.in_dim];
                    for j in 0..self.in_dim {
                        dx_t[j] += g * wi[j];
                    }
                    if ti > 0 {
                        let wh_grad = &mut self.w_hh.grad[u * h..(u + 1) * h];
                        for (j, &hv) in h_prev.iter().enumerate() {
                            wh_grad[j] += g * hv;
                        }
                        let wh = &self.w_hh.value[u * h..(u + 1) * h];
                        for j in 0..h {
                            dh_next[j] += g * wh[j];
                        }
                    }
                }
            }
        }
        self.cache = Some(cache);
        dx
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        vec![&mut self.w_ih, &mut self.w_hh, &mut self.bias]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::testutil::{assert_close, fd_at, probe_weights, weighted_sum};
    use rand::{Rng, SeedableRng};

    #[test]
    fn lstm_shapes() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut lstm = Lstm::new("lstm", 3, 5, &mut rng);
        let x = Batch::zeros(2, 4, 3);
        let y = lstm.forward(&x);
        assert_eq!((y.b, y.t, y.c), (2, 4, 5));
    }

    #[test]
    fn lstm_matches_framework_golden_values() {
        // Hidden sequence from a PyTorch float64 reference run (single bias
        // vector: torch's b_hh set to zero, i/f/g/o gate order).
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut lstm = Lstm::new("l", 2, 3, &mut rng);
        lstm.w_ih.value = vec![
            -0.3125, 0.125, -0.4375, 0.0, 0.4375, -0.125, 0.3125, -0.25, 0.1875, -0.375, 0.0625,
            -0.5, -0.0625, 0.375, -0.1875, 0.25, -0.3125, 0.125, -0.4375, 0.0, 0.4375, -0.125,
            0.3125, -0.25,
        ];
        lstm.w_hh.value = vec![
            -0.25, 0.1875, -0.375, 0.0625, 0.5, -0.0625, 0.375, -0.1875, 0.25, -0.3125, 0.125,
            -0.4375, 0.0, 0.4375, -0.125, 0.3125, -0.25, 0.1875, -0.375, 0.0625, 0.5, -0.0625,
            0.375, -0.1875, 0.25, -0.3125, 0.125, -0.4375, 0.0, 0.4375, -0.125, 0.3125, -0.25,
            0.1875, -0.375, 0.0625,
        ];
        lstm.bias.value = vec![
            -0.625, 0.25, -0.875, 0.0, 0.875, -0.25, 0.625, -0.5, 0.375, -0.75, 0.125, -1.0,
        ];
        let x = Batch {
            b: 1,
            t: 4,
            c: 2,
            data: vec![-0.75, 0.125, -1.0, -0.125, 0.75, -0.375, 0.5, -0.625],
        };
        let h = lstm.forward(&x);
        let expected = [
            0.097366333317459267,
            -0.089209966692400694,
            0.027691083550159257,
            0.13086356842564084,
            -0.14981416079776683,
            0.044079651088938111,
            0.068952760053080459,
            -0.32139928919106564,
            0.060987866471965274,
            0.067529377011244632,
            -0.37158773966620018,
            0.070330094798003381,
        ];
        for (a, e) in h.data.iter().zip(expected) {
            assert!((a - e).abs() < 1e-14, "{a} vs {e}");
        }
    }

    #[test]
    fn lstm_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut lstm = Lstm::new("lstm", 2, 3, &mut rng);
        let mut x = Batch::zeros(2, 4, 2);
        x.data.iter_mut().for_each(|v| *v = rng.gen_range(-1.0..1.0));
        let w = probe_weights(2 * 4 * 3);

        let _ = lstm.forward(&x);
        let dy = Batch { b: 2, t: 4, c: 3, data: w.clone() };
        let dx = lstm.backward(&dy);

        // Input gradient.
        for i in [0usize, 7, 15] {
            let mut value = x.data.clone();
            let numeric = fd_at(&mut value, i, 1e-6, &mut |v| {
                let mut l2 = lstm.clone();
                let xi = Batch { b: 2, t: 4, c: 2, data: v.to_vec() };
                weighted_sum(&l2.forward(&xi).data, &w)
            });
            assert_close(dx.data[i], numeric, 1e-5, "lstm dX");
        }
        // Parameter gradients across all three tensors.
        for (pick, label) in [(0usize, "w_ih"), (1, "w_hh"), (2, "bias")] {
            let grads = match pick {
                0 => lstm.w_ih.grad.clone(),
                1 => lstm.w_hh.grad.clone(),
                _ => lstm.bias.grad.clone(),
            };
            for i in [0usize, grads.len() / 2, grads.len() - 1] {
                let mut value = match pick {
                    0 => lstm.w_ih.value.clone(),
                    1 => lstm.w_hh.value.clone(),
                    _ => lstm.bias.value.clone(),
                };
                let numeric = fd_at(&mut value, i, 1e-6, &mut |v| {
                    let mut l2 = lstm.clone();
                    match pick {
                        0 => l2.w_ih.value = v.to_vec(),
                        1 => l2.w_hh.value = v.to_vec(),
                        _ => l2.bias.value = v.to_vec(),
                    }
                    weighted_sum(&l2.forward(&x).data, &w)
                });
                assert_close(grads[i], numeric, 1e-5, label);
            }
        }
    }
}
