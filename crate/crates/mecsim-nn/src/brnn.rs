use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::optim::Params;
use crate::tensor::{add_vec, Tensor2};

/// Bidirectional tanh-RNN scanned over the agent axis: the forward cell
/// reads agents 1..N, the backward cell N..1, and each agent's output is
/// the concatenation of both directions, so every agent's output depends on
/// every agent's input. Cell parameters are shared across positions, so the
/// parameter count is independent of the number of agents.
///
/// Flattening order: [wf, uf, bf, wb, ub, bb].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Brnn {
    pub wf: Tensor2, // H x I
    pub uf: Tensor2, // H x H
    pub bf: Tensor2, // 1 x H
    pub wb: Tensor2,
    pub ub: Tensor2,
    pub bb: Tensor2,
    pub hidden: usize,
}

pub struct BrnnCache {
    xs: Vec<Vec<f64>>,
    hf: Vec<Vec<f64>>, // per agent
    hb: Vec<Vec<f64>>,
}

impl Brnn {
    pub fn new(input: usize, hidden: usize, rng: &mut impl Rng) -> Self {
        Brnn {
            wf: Tensor2::uniform(hidden, input, input, rng),
            uf: Tensor2::uniform(hidden, hidden, hidden, rng),
            bf: Tensor2::uniform(1, hidden, input, rng),
            wb: Tensor2::uniform(hidden, input, input, rng),
            ub: Tensor2::uniform(hidden, hidden, hidden, rng),
            bb: Tensor2::uniform(1, hidden, input, rng),
            hidden,
        }
    }

    pub fn out_dim(&self) -> usize {
        2 * self.hidden
    }

    fn cell(
        w: &Tensor2,
        u: &Tensor2,
        b: &Tensor2,
        x: &[f64],
        h_prev: &[f64],
    ) -> Vec<f64> {
        let mut z = w.matvec(x);
        add_vec(&mut z, &u.matvec(h_prev));
        add_vec(&mut z, b.row(0));
        z.iter().map(|&v| v.tanh()).collect()
    }

    /// Per-agent outputs, each of width `2 * hidden`.
    pub fn forward(&self, xs: &[Vec<f64>]) -> (Vec<Vec<f64>>, BrnnCache) {
        assert!(!xs.is_empty(), "brnn needs at least one agent");
        let n = xs.len();
        let mut hf = Vec::with_capacity(n);
        let mut prev = vec![0.0; self.hidden];
        for x in xs {
            let h = Self::cell(&self.wf, &self.uf, &self.bf, x, &prev);
            prev = h.clone();
            hf.push(h);
        }
        let mut hb = vec![Vec::new(); n];
        let mut prev = vec![0.0; self.hidden];
        for i in (0..n).rev() {
            let h = Self::cell(&self.wb, &self.ub, &self.bb, &xs[i], &prev);
            prev = h.clone();
            hb[i] = h;
        }
        let ys = (0..n)
            .map(|i| {
                let mut y = hf[i].clone();
                y.extend_from_slice(&hb[i]);
                y
            })
            .collect();
        (
            ys,
            BrnnCache {
                xs: xs.to_vec(),
                hf,
                hb,
            },
        )
    }

    /// Backward through both scans. Returns per-agent input gradients and
    /// parameter gradients in flattening order.
    pub fn backward(&self, cache: &BrnnCache, dys: &[Vec<f64>]) -> (Vec<Vec<f64>>, Vec<Tensor2>) {
        let n = cache.xs.len();
        let h = self.hidden;
        let mut dxs: Vec<Vec<f64>> = cache.xs.iter().map(|x| vec![0.0; x.len()]).collect();
        let mut dwf = Tensor2::zeros(self.wf.rows, self.wf.cols);
        let mut duf = Tensor2::zeros(self.uf.rows, self.uf.cols);
        let mut dbf = Tensor2::zeros(1, h);
        let mut dwb = Tensor2::zeros(self.wb.rows, self.wb.cols);
        let mut dub = Tensor2::zeros(self.ub.rows, self.ub.cols);
        let mut dbb = Tensor2::zeros(1, h);

        // Forward-direction cell: scan agents in reverse.
        let mut carry = vec![0.0; h];
        for i in (0..n).rev() {
            let mut dh: Vec<f64> = dys[i][..h].to_vec();
            add_vec(&mut dh, &carry);
            let dpre: Vec<f64> = dh
                .iter()
                .zip(&cache.hf[i])
                .map(|(&g, &hv)| g * (1.0 - hv * hv))
                .collect();
            let h_prev: &[f64] = if i == 0 { &vec![0.0; h] } else { &cache.hf[i - 1] };
            dwf.add_outer(&dpre, &cache.xs[i], 1.0);
            duf.add_outer(&dpre, h_prev, 1.0);
            add_vec(&mut dbf.data, &dpre);
            add_vec(&mut dxs[i], &self.wf.matvec_t(&dpre));
            carry = self.uf.matvec_t(&dpre);
        }

        // Backward-direction cell: scan agents forward.
        let mut carry = vec![0.0; h];
        for i in 0..n {
            let mut dh: Vec<f64> = dys[i][h..].to_vec();
            add_vec(&mut dh, &carry);
            let dpre: Vec<f64> = dh
                .iter()
                .zip(&cache.hb[i])
                .map(|(&g, &hv)| g * (1.0 - hv * hv))
                .collect();
            let h_prev: &[f64] = if i == n - 1 { &vec![0.0; h] } else { &cache.hb[i + 1] };
            dwb.add_outer(&dpre, &cache.xs[i], 1.0);
            dub.add_outer(&dpre, h_prev, 1.0);
            add_vec(&mut dbb.data, &dpre);
            add_vec(&mut dxs[i], &self.wb.matvec_t(&dpre));
            carry = self.ub.matvec_t(&dpre);
        }
        (dxs, vec![dwf, duf, dbf, dwb, dub, dbb])
    }
}

impl Params for Brnn {
    fn params(&self) -> Vec<&Tensor2> {
        vec![&self.wf, &self.uf, &self.bf, &self.wb, &self.ub, &self.bb]
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor2> {
        vec![
            &mut self.wf,
            &mut self.uf,
            &mut self.bf,
            &mut self.wb,
            &mut self.ub,
            &mut self.bb,
        ]
    }
}
