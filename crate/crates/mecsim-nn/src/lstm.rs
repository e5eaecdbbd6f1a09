use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::optim::Params;
use crate::tensor::{add_vec, Tensor2};

/// LSTM cell with gate order [input, forget, cell, output] along the 4H
/// axis. Parameter order: [wx, wh, b].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LstmCell {
    pub wx: Tensor2, // 4H x I
    pub wh: Tensor2, // 4H x H
    pub b: Tensor2,  // 1 x 4H
    pub hidden: usize,
}

#[derive(Debug, Clone)]
pub struct LstmStepCache {
    pub x: Vec<f64>,
    pub h_prev: Vec<f64>,
    pub c_prev: Vec<f64>,
    pub i: Vec<f64>,
    pub f: Vec<f64>,
    pub g: Vec<f64>,
    pub o: Vec<f64>,
    pub c: Vec<f64>,
}

#[inline]
fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

impl LstmCell {
    pub fn new(input: usize, hidden: usize, rng: &mut impl Rng) -> Self {
        LstmCell {
            wx: Tensor2::uniform(4 * hidden, input, input, rng),
            wh: Tensor2::uniform(4 * hidden, hidden, hidden, rng),
            b: Tensor2::uniform(1, 4 * hidden, input, rng),
            hidden,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.wx.cols
    }

    /// One step of the standard gate equations.
    pub fn step(
        &self,
        x: &[f64],
        h_prev: &[f64],
        c_prev: &[f64],
    ) -> (Vec<f64>, Vec<f64>, LstmStepCache) {
        let hn = self.hidden;
        let mut z = self.wx.matvec(x);
        add_vec(&mut z, &self.wh.matvec(h_prev));
        add_vec(&mut z, self.b.row(0));
        let mut i = vec![0.0; hn];
        let mut f = vec![0.0; hn];
        let mut g = vec![0.0; hn];
        let mut o = vec![0.0; hn];
        for k in 0..hn {
            i[k] = sigmoid(z[k]);
            f[k] = sigmoid(z[hn + k]);
            g[k] = z[2 * hn + k].tanh();
            o[k] = sigmoid(z[3 * hn + k]);
        }
        let mut c = vec![0.0; hn];
        let mut h = vec![0.0; hn];
        for k in 0..hn {
            c[k] = f[k] * c_prev[k] + i[k] * g[k];
            h[k] = o[k] * c[k].tanh();
        }
        let cache = LstmStepCache {
            x: x.to_vec(),
            h_prev: h_prev.to_vec(),
            c_prev: c_prev.to_vec(),
            i,
            f,
            g,
            o,
            c: c.clone(),
        };
        (h, c, cache)
    }

    /// Backward through one step. `dh`/`dc` are the gradients flowing into
    /// this step's outputs; returns (dx, dh_prev, dc_prev) and accumulates
    /// parameter gradients into `grads` ([dwx, dwh, db]).
    pub fn backward_step(
        &self,
        cache: &LstmStepCache,
        dh: &[f64],
        dc_in: &[f64],
        grads: &mut [Tensor2],
    ) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let hn = self.hidden;
        let mut dz = vec![0.0; 4 * hn];
        let mut dc_prev = vec![0.0; hn];
        for k in 0..hn {
            let tc = cache.c[k].tanh();
            let d_o = dh[k] * tc;
            let dc = dc_in[k] + dh[k] * cache.o[k] * (1.0 - tc * tc);
            let d_i = dc * cache.g[k];
            let d_f = dc * cache.c_prev[k];
            let d_g = dc * cache.i[k];
            dz[k] = d_i * cache.i[k] * (1.0 - cache.i[k]);
            dz[hn + k] = d_f * cache.f[k] * (1.0 - cache.f[k]);
            dz[2 * hn + k] = d_g * (1.0 - cache.g[k] * cache.g[k]);
            dz[3 * hn + k] = d_o * cache.o[k] * (1.0 - cache.o[k]);
            dc_prev[k] = dc * cache.f[k];
        }
        grads[0].add_outer(&dz, &cache.x, 1.0);
        grads[1].add_outer(&dz, &cache.h_prev, 1.0);
        add_vec(&mut grads[2].data, &dz);
        let dx = self.wx.matvec_t(&dz);
        let dh_prev = self.wh.matvec_t(&dz);
        (dx, dh_prev, dc_prev)
    }

    /// Run a window of inputs from zero initial state.
    pub fn forward_window(&self, xs: &[Vec<f64>]) -> (Vec<f64>, Vec<LstmStepCache>) {
        let mut h = vec![0.0; self.hidden];
        let mut c = vec![0.0; self.hidden];
        let mut caches = Vec::with_capacity(xs.len());
        for x in xs {
            let (h2, c2, cache) = self.step(x, &h, &c);
            h = h2;
            c = c2;
            caches.push(cache);
        }
        (h, caches)
    }

    /// BPTT over a window given the gradient of the final hidden state.
    /// Returns per-step input gradients and [dwx, dwh, db].
    pub fn backward_window(
        &self,
        caches: &[LstmStepCache],
        dh_last: &[f64],
    ) -> (Vec<Vec<f64>>, Vec<Tensor2>) {
        let mut grads = crate::optim::zeros_like(self);
        let mut dh = dh_last.to_vec();
        let mut dc = vec![0.0; self.hidden];
        let mut dxs = vec![Vec::new(); caches.len()];
        for (t, cache) in caches.iter().enumerate().rev() {
            let (dx, dh_prev, dc_prev) = self.backward_step(cache, &dh, &dc, &mut grads);
            dxs[t] = dx;
            dh = dh_prev;
            dc = dc_prev;
        }
        (dxs, grads)
    }
}

impl Params for LstmCell {
    fn params(&self) -> Vec<&Tensor2> {
        vec![&self.wx, &self.wh, &self.b]
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor2> {
        vec![&mut self.wx, &mut self.wh, &mut self.b]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optim::zeros_like;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn dead_cell_stays_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut cell = LstmCell::new(3, 4, &mut rng);
        for t in cell.params_mut() {
            t.data.iter_mut().for_each(|v| *v = 0.0);
        }
        let (h, c, _) = cell.step(&[0.0; 3], &[0.0; 4], &[0.0; 4]);
        assert!(h.iter().all(|&v| v == 0.0));
        assert!(c.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn window_of_one_equals_single_step_backward() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let cell = LstmCell::new(3, 4, &mut rng);
        let x = vec![0.3, -0.2, 0.9];
        let (_, caches) = cell.forward_window(std::slice::from_ref(&x));
        let dh = vec![1.0, -0.5, 0.25, 2.0];
        let (dxs_w, grads_w) = cell.backward_window(&caches, &dh);
        let mut grads_s = zeros_like(&cell);
        let (dx_s, _, _) =
            cell.backward_step(&caches[0], &dh, &vec![0.0; 4], &mut grads_s);
        assert_eq!(dxs_w[0], dx_s);
        for (a, b) in grads_w.iter().zip(&grads_s) {
            assert_eq!(a.data, b.data);
        }
    }
}
