use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::optim::Params;
use crate::tensor::{add_vec, dot, Tensor2};

/// Additive attention: scores e_i = v . tanh(W u_i + b), softmax weights,
/// context m = sum_i alpha_i u_i. Parameter order: [w, b, v].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Attention {
    pub w: Tensor2, // A x C
    pub b: Tensor2, // 1 x A
    pub v: Tensor2, // 1 x A
}

pub struct AttentionCache {
    pub inputs: Vec<Vec<f64>>,
    pub t: Vec<Vec<f64>>, // tanh(W u_i + b)
    pub alpha: Vec<f64>,
}

impl Attention {
    pub fn new(input_dim: usize, attn_dim: usize, rng: &mut impl Rng) -> Self {
        Attention {
            w: Tensor2::uniform(attn_dim, input_dim, input_dim, rng),
            b: Tensor2::uniform(1, attn_dim, input_dim, rng),
            v: Tensor2::uniform(1, attn_dim, attn_dim, rng),
        }
    }

    pub fn forward(&self, inputs: &[Vec<f64>]) -> (Vec<f64>, AttentionCache) {
        assert!(!inputs.is_empty(), "attention needs at least one input");
        let mut t = Vec::with_capacity(inputs.len());
        let mut scores = Vec::with_capacity(inputs.len());
        for u in inputs {
            let mut z = self.w.matvec(u);
            add_vec(&mut z, self.b.row(0));
            let tu: Vec<f64> = z.iter().map(|&x| x.tanh()).collect();
            scores.push(dot(self.v.row(0), &tu));
            t.push(tu);
        }
        let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = scores.iter().map(|&e| (e - max).exp()).collect();
        let total: f64 = exps.iter().sum();
        let alpha: Vec<f64> = exps.iter().map(|&e| e / total).collect();
        let dim = inputs[0].len();
        let mut m = vec![0.0; dim];
        for (a, u) in alpha.iter().zip(inputs) {
            for (mv, uv) in m.iter_mut().zip(u) {
                *mv += a * uv;
            }
        }
        (
            m,
            AttentionCache {
                inputs: inputs.to_vec(),
                t,
                alpha,
            },
        )
    }

    /// Returns (dinputs, [dw, db, dv]).
    pub fn backward(&self, cache: &AttentionCache, dm: &[f64]) -> (Vec<Vec<f64>>, Vec<Tensor2>) {
        let n = cache.inputs.len();
        let mut dinputs: Vec<Vec<f64>> = cache
            .inputs
            .iter()
            .map(|u| vec![0.0; u.len()])
            .collect();
        // m = sum alpha_i u_i.
        let dalpha: Vec<f64> = cache.inputs.iter().map(|u| dot(dm, u)).collect();
        for i in 0..n {
            for (d, g) in dinputs[i].iter_mut().zip(dm) {
                *d += cache.alpha[i] * g;
            }
        }
        // Softmax backward.
        let weighted: f64 = cache.alpha.iter().zip(&dalpha).map(|(a, d)| a * d).sum();
        let de: Vec<f64> = cache
            .alpha
            .iter()
            .zip(&dalpha)
            .map(|(a, d)| a * (d - weighted))
            .collect();
        let mut dw = Tensor2::zeros(self.w.rows, self.w.cols);
        let mut db = Tensor2::zeros(1, self.b.cols);
        let mut dv = Tensor2::zeros(1, self.v.cols);
        for i in 0..n {
            for (dvk, tk) in dv.data.iter_mut().zip(&cache.t[i]) {
                *dvk += de[i] * tk;
            }
            let dpre: Vec<f64> = cache.t[i]
                .iter()
                .zip(self.v.row(0))
                .map(|(&tk, &vk)| de[i] * vk * (1.0 - tk * tk))
                .collect();
            dw.add_outer(&dpre, &cache.inputs[i], 1.0);
            add_vec(&mut db.data, &dpre);
            add_vec(&mut dinputs[i], &self.w.matvec_t(&dpre));
        }
        (dinputs, vec![dw, db, dv])
    }
}

impl Params for Attention {
    fn params(&self) -> Vec<&Tensor2> {
        vec![&self.w, &self.b, &self.v]
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor2> {
        vec![&mut self.w, &mut self.b, &mut self.v]
    }
}
