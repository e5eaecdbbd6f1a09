use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::optim::Params;
use crate::tensor::Tensor2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Activation {
    Identity,
    Tanh,
    Relu,
}

impl Activation {
    #[inline]
    pub fn apply(&self, z: f64) -> f64 {
        match self {
            Activation::Identity => z,
            Activation::Tanh => z.tanh(),
            Activation::Relu => z.max(0.0),
        }
    }

    /// Derivative expressed through the pre-activation.
    #[inline]
    pub fn deriv(&self, z: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::Tanh => {
                let t = z.tanh();
                1.0 - t * t
            }
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

/// Fully connected layer: y = act(W x + b). Parameter order: [w, b].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Dense {
    pub w: Tensor2,
    pub b: Tensor2,
    pub act: Activation,
}

pub struct DenseCache {
    pub x: Vec<f64>,
    pub pre: Vec<f64>,
}

impl Dense {
    pub fn new(in_dim: usize, out_dim: usize, act: Activation, rng: &mut impl Rng) -> Self {
        Dense {
            w: Tensor2::uniform(out_dim, in_dim, in_dim, rng),
            b: Tensor2::uniform(1, out_dim, in_dim, rng),
            act,
        }
    }

    pub fn in_dim(&self) -> usize {
        self.w.cols
    }

    pub fn out_dim(&self) -> usize {
        self.w.rows
    }

    pub fn forward(&self, x: &[f64]) -> (Vec<f64>, DenseCache) {
        let mut pre = self.w.matvec(x);
        for (p, b) in pre.iter_mut().zip(self.b.row(0)) {
            *p += b;
        }
        let y = pre.iter().map(|&z| self.act.apply(z)).collect();
        (
            y,
            DenseCache {
                x: x.to_vec(),
                pre,
            },
        )
    }

    /// Returns (dx, [dw, db]).
    pub fn backward(&self, cache: &DenseCache, dy: &[f64]) -> (Vec<f64>, Vec<Tensor2>) {
        let dz: Vec<f64> = dy
            .iter()
            .zip(&cache.pre)
            .map(|(&g, &z)| g * self.act.deriv(z))
            .collect();
        let mut dw = Tensor2::zeros(self.w.rows, self.w.cols);
        dw.add_outer(&dz, &cache.x, 1.0);
        let db = Tensor2 {
            rows: 1,
            cols: dz.len(),
            data: dz.clone(),
        };
        let dx = self.w.matvec_t(&dz);
        (dx, vec![dw, db])
    }
}

impl Params for Dense {
    fn params(&self) -> Vec<&Tensor2> {
        vec![&self.w, &self.b]
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor2> {
        vec![&mut self.w, &mut self.b]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn identity_layer_passes_input_through() {
        let mut d = Dense::new(3, 3, Activation::Identity, &mut ChaCha8Rng::seed_from_u64(0));
        d.w = Tensor2 {
            rows: 3,
            cols: 3,
            data: vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0],
        };
        d.b = Tensor2::zeros(1, 3);
        let (y, _) = d.forward(&[0.3, -0.7, 2.0]);
        assert_eq!(y, vec![0.3, -0.7, 2.0]);
    }

    #[test]
    fn linear_weight_gradient_is_outer_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let d = Dense::new(3, 2, Activation::Identity, &mut rng);
        let x = [0.5, -1.0, 2.0];
        let (_, cache) = d.forward(&x);
        let dy = [1.0, -2.0];
        let (_, grads) = d.backward(&cache, &dy);
        for r in 0..2 {
            for c in 0..3 {
                assert_eq!(grads[0].get(r, c), dy[r] * x[c]);
            }
        }
        assert_eq!(grads[1].row(0), &dy);
    }
}
