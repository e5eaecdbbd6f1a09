use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::optim::Params;
use crate::tensor::Tensor2;

/// 1-D convolution over the feature axis: single input channel, `channels`
/// output channels, kernel width 3, same padding, tanh activation. The
/// output is position-major: one `channels`-dim vector per input position.
/// Parameter order: [w, b].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Conv1d {
    pub w: Tensor2, // channels x 3
    pub b: Tensor2, // 1 x channels
}

pub struct ConvCache {
    pub x: Vec<f64>,
    pub pre: Vec<Vec<f64>>, // per position, per channel
}

impl Conv1d {
    pub fn new(channels: usize, rng: &mut impl Rng) -> Self {
        Conv1d {
            w: Tensor2::uniform(channels, 3, 3, rng),
            b: Tensor2::uniform(1, channels, 3, rng),
        }
    }

    pub fn channels(&self) -> usize {
        self.w.rows
    }

    pub fn forward(&self, x: &[f64]) -> (Vec<Vec<f64>>, ConvCache) {
        let n = x.len();
        let ch = self.channels();
        let mut pre = vec![vec![0.0; ch]; n];
        for p in 0..n {
            for c in 0..ch {
                let mut acc = self.b.get(0, c);
                for k in 0..3usize {
                    let q = p as isize + k as isize - 1;
                    if q >= 0 && (q as usize) < n {
                        acc += self.w.get(c, k) * x[q as usize];
                    }
                }
                pre[p][c] = acc;
            }
        }
        let y = pre
            .iter()
            .map(|row| row.iter().map(|&z| z.tanh()).collect())
            .collect();
        (
            y,
            ConvCache {
                x: x.to_vec(),
                pre,
            },
        )
    }

    /// Returns (dx, [dw, db]) given per-position output gradients.
    pub fn backward(&self, cache: &ConvCache, dy: &[Vec<f64>]) -> (Vec<f64>, Vec<Tensor2>) {
        let n = cache.x.len();
        let ch = self.channels();
        let mut dw = Tensor2::zeros(ch, 3);
        let mut db = Tensor2::zeros(1, ch);
        let mut dx = vec![0.0; n];
        for p in 0..n {
            for c in 0..ch {
                let t = cache.pre[p][c].tanh();
                let dpre = dy[p][c] * (1.0 - t * t);
                db.data[c] += dpre;
                for k in 0..3usize {
                    let q = p as isize + k as isize - 1;
                    if q >= 0 && (q as usize) < n {
                        dw.set(c, k, dw.get(c, k) + dpre * cache.x[q as usize]);
                        dx[q as usize] += dpre * self.w.get(c, k);
                    }
                }
            }
        }
        (dx, vec![dw, db])
    }
}

impl Params for Conv1d {
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
    fn same_padding_keeps_length_and_matches_hand_case() {
        let mut conv = Conv1d::new(1, &mut ChaCha8Rng::seed_from_u64(0));
        conv.w.data.copy_from_slice(&[1.0, 0.0, -1.0]);
        conv.b.data[0] = 0.0;
        let (y, _) = conv.forward(&[1.0, 2.0, 3.0]);
        assert_eq!(y.len(), 3);
        // Position 0: left pad 0*1 + 1*0 - 2*1 = -2; tanh(-2).
        assert!((y[0][0] - (-2.0f64).tanh()).abs() < 1e-15);
        // Position 1: 1*1 + 0 - 3 = -2.
        assert!((y[1][0] - (-2.0f64).tanh()).abs() < 1e-15);
        // Position 2: 2*1 + 0 - 0 = 2.
        assert!((y[2][0] - 2.0f64.tanh()).abs() < 1e-15);
    }
}
