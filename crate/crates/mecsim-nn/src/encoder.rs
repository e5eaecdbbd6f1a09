use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::attention::{Attention, AttentionCache};
use crate::conv::{Conv1d, ConvCache};
use crate::lstm::{LstmCell, LstmStepCache};
use crate::optim::{zeros_like, Params};
use crate::tensor::Tensor2;

/// Internal-state predictor: at each window step the observation vector is
/// convolved over its feature axis, the per-position feature vectors are
/// mixed by additive attention into one context vector, and an LSTM folds
/// the context sequence into the state estimate h_W. The recurrent state
/// always starts from zero, so episode boundaries reset implicitly.
///
/// Flattening order: [conv.w, conv.b, attn.w, attn.b, attn.v, lstm.wx,
/// lstm.wh, lstm.b].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StateEncoder {
    pub conv: Conv1d,
    pub attn: Attention,
    pub lstm: LstmCell,
}

pub struct EncoderCache {
    conv: Vec<ConvCache>,
    attn: Vec<AttentionCache>,
    lstm: Vec<LstmStepCache>,
}

impl StateEncoder {
    pub fn new(channels: usize, attn_dim: usize, hidden: usize, rng: &mut impl Rng) -> Self {
        StateEncoder {
            conv: Conv1d::new(channels, rng),
            attn: Attention::new(channels, attn_dim, rng),
            lstm: LstmCell::new(channels, hidden, rng),
        }
    }

    pub fn hidden(&self) -> usize {
        self.lstm.hidden
    }

    /// Encode a window of observations into the final hidden state.
    pub fn forward(&self, window: &[Vec<f64>]) -> (Vec<f64>, EncoderCache) {
        assert!(!window.is_empty(), "encoder window must not be empty");
        let mut h = vec![0.0; self.lstm.hidden];
        let mut c = vec![0.0; self.lstm.hidden];
        debug_assert!(h.iter().all(|&v| v == 0.0) && c.iter().all(|&v| v == 0.0));
        let mut cache = EncoderCache {
            conv: Vec::with_capacity(window.len()),
            attn: Vec::with_capacity(window.len()),
            lstm: Vec::with_capacity(window.len()),
        };
        for obs in window {
            let (positions, conv_cache) = self.conv.forward(obs);
            let (context, attn_cache) = self.attn.forward(&positions);
            let (h2, c2, lstm_cache) = self.lstm.step(&context, &h, &c);
            h = h2;
            c = c2;
            cache.conv.push(conv_cache);
            cache.attn.push(attn_cache);
            cache.lstm.push(lstm_cache);
        }
        (h, cache)
    }

    /// Full BPTT through LSTM, attention and convolution. Returns
    /// per-window-step observation gradients and the parameter gradients in
    /// flattening order.
    pub fn backward(&self, cache: &EncoderCache, dh_last: &[f64]) -> (Vec<Vec<f64>>, Vec<Tensor2>) {
        let steps = cache.lstm.len();
        let mut conv_grads = zeros_like(&self.conv);
        let mut attn_grads = zeros_like(&self.attn);
        let mut lstm_grads = zeros_like(&self.lstm);
        let mut dh = dh_last.to_vec();
        let mut dc = vec![0.0; self.lstm.hidden];
        let mut dobs = vec![Vec::new(); steps];
        for t in (0..steps).rev() {
            let (dcontext, dh_prev, dc_prev) =
                self.lstm
                    .backward_step(&cache.lstm[t], &dh, &dc, &mut lstm_grads);
            let (dpositions, ag) = self.attn.backward(&cache.attn[t], &dcontext);
            crate::optim::add_scaled(&mut attn_grads, &ag, 1.0);
            let (dx, cg) = self.conv.backward(&cache.conv[t], &dpositions);
            crate::optim::add_scaled(&mut conv_grads, &cg, 1.0);
            dobs[t] = dx;
            dh = dh_prev;
            dc = dc_prev;
        }
        let mut grads = conv_grads;
        grads.extend(attn_grads);
        grads.extend(lstm_grads);
        (dobs, grads)
    }
}

impl Params for StateEncoder {
    fn params(&self) -> Vec<&Tensor2> {
        let mut p = self.conv.params();
        p.extend(self.attn.params());
        p.extend(self.lstm.params());
        p
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor2> {
        let mut p = self.conv.params_mut();
        p.extend(self.attn.params_mut());
        p.extend(self.lstm.params_mut());
        p
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_params_zero_window_give_zero_state() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut enc = StateEncoder::new(4, 3, 5, &mut rng);
        for t in enc.params_mut() {
            t.data.iter_mut().for_each(|v| *v = 0.0);
        }
        let window = vec![vec![0.0; 6]; 3];
        let (h, _) = enc.forward(&window);
        assert!(h.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn output_dim_is_hidden_size_regardless_of_input_len() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let enc = StateEncoder::new(4, 3, 5, &mut rng);
        for obs_len in [2usize, 9, 17] {
            let window = vec![vec![0.1; obs_len]; 4];
            let (h, _) = enc.forward(&window);
            assert_eq!(h.len(), 5);
        }
    }
}
