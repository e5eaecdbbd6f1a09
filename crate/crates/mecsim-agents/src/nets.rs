use rand::Rng;
use serde::{Deserialize, Serialize};

use mecsim_core::env::ActionMask;
use mecsim_nn::{Activation, Brnn, Dense, Params, StateEncoder, Tensor2};

use crate::NetConfig;

/// Feed-forward Q-network for DQN: two tanh layers and a linear head over
/// the padded action space. Flattening order: [l1, l2, head].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QMlp {
    pub l1: Dense,
    pub l2: Dense,
    pub head: Dense,
}

impl QMlp {
    pub fn new(input: usize, cfg: &NetConfig, rng: &mut impl Rng) -> Self {
        QMlp {
            l1: Dense::new(input, cfg.q_hidden, Activation::Tanh, rng),
            l2: Dense::new(cfg.q_hidden, cfg.q_hidden, Activation::Tanh, rng),
            head: Dense::new(cfg.q_hidden, cfg.action_width, Activation::Identity, rng),
        }
    }

    pub fn forward(&self, x: &[f64]) -> (Vec<f64>, QMlpCache) {
        let (h1, c1) = self.l1.forward(x);
        let (h2, c2) = self.l2.forward(&h1);
        let (q, c3) = self.head.forward(&h2);
        (q, QMlpCache { c1, c2, c3 })
    }

    /// Returns parameter gradients in flattening order.
    pub fn backward(&self, cache: &QMlpCache, dq: &[f64]) -> Vec<Tensor2> {
        let (dh2, g3) = self.head.backward(&cache.c3, dq);
        let (dh1, g2) = self.l2.backward(&cache.c2, &dh2);
        let (_, g1) = self.l1.backward(&cache.c1, &dh1);
        let mut grads = g1;
        grads.extend(g2);
        grads.extend(g3);
        grads
    }
}

pub struct QMlpCache {
    c1: mecsim_nn::dense::DenseCache,
    c2: mecsim_nn::dense::DenseCache,
    c3: mecsim_nn::dense::DenseCache,
}

impl Params for QMlp {
    fn params(&self) -> Vec<&Tensor2> {
        let mut p = self.l1.params();
        p.extend(self.l2.params());
        p.extend(self.head.params());
        p
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor2> {
        let mut p = self.l1.params_mut();
        p.extend(self.l2.params_mut());
        p.extend(self.head.params_mut());
        p
    }
}

/// Recurrent Q-network for DRQN: shared window encoder, then a tanh layer
/// over [state, agent block] and a linear action head. Flattening order:
/// [encoder, mix, head].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DrqnNet {
    pub enc: StateEncoder,
    pub mix: Dense,
    pub head: Dense,
}

impl DrqnNet {
    pub fn new(agent_block: usize, cfg: &NetConfig, rng: &mut impl Rng) -> Self {
        DrqnNet {
            enc: StateEncoder::new(cfg.enc_channels, cfg.attn_dim, cfg.enc_hidden, rng),
            mix: Dense::new(cfg.enc_hidden + agent_block, cfg.q_hidden, Activation::Tanh, rng),
            head: Dense::new(cfg.q_hidden, cfg.action_width, Activation::Identity, rng),
        }
    }
}

impl Params for DrqnNet {
    fn params(&self) -> Vec<&Tensor2> {
        let mut p = self.enc.params();
        p.extend(self.mix.params());
        p.extend(self.head.params());
        p
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor2> {
        let mut p = self.enc.params_mut();
        p.extend(self.mix.params_mut());
        p.extend(self.head.params_mut());
        p
    }
}

/// Com-DDPG actor: shared window encoder, BRNN over the agent axis on
/// [state, agent block], linear score head per agent. Flattening order:
/// [encoder, brnn, head].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ActorNet {
    pub enc: StateEncoder,
    pub brnn: Brnn,
    pub head: Dense,
}

impl ActorNet {
    pub fn new(agent_block: usize, cfg: &NetConfig, rng: &mut impl Rng) -> Self {
        ActorNet {
            enc: StateEncoder::new(cfg.enc_channels, cfg.attn_dim, cfg.enc_hidden, rng),
            brnn: Brnn::new(cfg.enc_hidden + agent_block, cfg.brnn_hidden, rng),
            head: Dense::new(2 * cfg.brnn_hidden, cfg.action_width, Activation::Identity, rng),
        }
    }
}

impl Params for ActorNet {
    fn params(&self) -> Vec<&Tensor2> {
        let mut p = self.enc.params();
        p.extend(self.brnn.params());
        p.extend(self.head.params());
        p
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor2> {
        let mut p = self.enc.params_mut();
        p.extend(self.brnn.params_mut());
        p.extend(self.head.params_mut());
        p
    }
}

/// Com-DDPG critic: like the actor but the BRNN also sees each agent's
/// action vector, and the head yields one value per agent. Flattening
/// order: [encoder, brnn, head].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CriticNet {
    pub enc: StateEncoder,
    pub brnn: Brnn,
    pub head: Dense,
}

impl CriticNet {
    pub fn new(agent_block: usize, cfg: &NetConfig, rng: &mut impl Rng) -> Self {
        CriticNet {
            enc: StateEncoder::new(cfg.enc_channels, cfg.attn_dim, cfg.enc_hidden, rng),
            brnn: Brnn::new(
                cfg.enc_hidden + agent_block + cfg.action_width,
                cfg.brnn_hidden,
                rng,
            ),
            head: Dense::new(2 * cfg.brnn_hidden, 1, Activation::Identity, rng),
        }
    }
}

impl Params for CriticNet {
    fn params(&self) -> Vec<&Tensor2> {
        let mut p = self.enc.params();
        p.extend(self.brnn.params());
        p.extend(self.head.params());
        p
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor2> {
        let mut p = self.enc.params_mut();
        p.extend(self.brnn.params_mut());
        p.extend(self.head.params_mut());
        p
    }
}

/// Mask-aware softmax over padded scores. Invalid entries get probability
/// zero; `mask` is `None` for a virtual decision over the whole unpadded
/// action set of width `n_real`.
pub fn masked_softmax(scores: &[f64], mask: Option<&ActionMask>, n_real: usize) -> Vec<f64> {
    let valid = |j: usize| match mask {
        Some(m) => m.is_valid(j),
        None => j < n_real,
    };
    let mut max = f64::NEG_INFINITY;
    for (j, &s) in scores.iter().enumerate() {
        if valid(j) && s > max {
            max = s;
        }
    }
    let mut probs = vec![0.0; scores.len()];
    let mut total = 0.0;
    for (j, &s) in scores.iter().enumerate() {
        if valid(j) {
            let e = (s - max).exp();
            probs[j] = e;
            total += e;
        }
    }
    if total > 0.0 {
        for p in probs.iter_mut() {
            *p /= total;
        }
    }
    probs
}

/// Backward through [`masked_softmax`]: dscores from dprobs.
pub fn masked_softmax_backward(probs: &[f64], dprobs: &[f64]) -> Vec<f64> {
    let weighted: f64 = probs.iter().zip(dprobs).map(|(p, d)| p * d).sum();
    probs
        .iter()
        .zip(dprobs)
        .map(|(p, d)| p * (d - weighted))
        .collect()
}

/// Greedy masked argmax over scores.
pub fn masked_argmax(scores: &[f64], mask: &ActionMask) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (j, &s) in scores.iter().enumerate() {
        if mask.is_valid(j) && best.map(|(_, b)| s > b).unwrap_or(true) {
            best = Some((j, s));
        }
    }
    best.map(|(j, _)| j)
}

#[cfg(test)]
mod tests {
    use super::*;
    use mecsim_nn::gradcheck::{flatten_grads, max_rel_err, numeric_grad, DEFAULT_H};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn masked_softmax_zeroes_invalid_and_sums_to_one() {
        let mask = ActionMask {
            valid: vec![1, 0, 1],
        };
        let p = masked_softmax(&[1.0, 100.0, 2.0, -3.0], Some(&mask), 3);
        assert_eq!(p[1], 0.0);
        assert_eq!(p[3], 0.0);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(p[2] > p[0]);
    }

    #[test]
    fn masked_softmax_gradient_matches_finite_differences() {
        let mask = ActionMask {
            valid: vec![1, 1, 0, 1],
        };
        let scores = vec![0.3, -0.8, 5.0, 1.2];
        let proj = vec![0.5, -1.0, 0.7, 2.0];
        let probs = masked_softmax(&scores, Some(&mask), 4);
        let dprobs: Vec<f64> = proj.clone();
        let analytic = masked_softmax_backward(&probs, &dprobs);
        let numeric = numeric_grad(
            |s: &[f64]| {
                let p = masked_softmax(s, Some(&mask), 4);
                p.iter().zip(&proj).map(|(a, b)| a * b).sum()
            },
            &scores,
            DEFAULT_H,
        );
        assert!(max_rel_err(&analytic, &numeric) < 1e-6);
    }

    #[test]
    fn qmlp_backward_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let cfg = NetConfig {
            action_width: 4,
            q_hidden: 6,
            ..NetConfig::default()
        };
        let net = QMlp::new(5, &cfg, &mut rng);
        let x: Vec<f64> = (0..5).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let proj: Vec<f64> = (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let (_, cache) = net.forward(&x);
        let grads = net.backward(&cache, &proj);
        let numeric = numeric_grad(
            |flat: &[f64]| {
                let mut n = net.clone();
                n.load_flat(flat).unwrap();
                let (q, _) = n.forward(&x);
                q.iter().zip(&proj).map(|(a, b)| a * b).sum()
            },
            &net.flatten(),
            DEFAULT_H,
        );
        assert!(max_rel_err(&flatten_grads(&grads), &numeric) < 1e-4);
    }

    #[test]
    fn actor_and_critic_param_counts_do_not_depend_on_agent_count() {
        // The same nets process 2 or 8 agents; parameters live in shared
        // cells and fixed-width heads.
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let cfg = NetConfig {
            action_width: 19,
            ..NetConfig::default()
        };
        let actor = ActorNet::new(8, &cfg, &mut rng);
        let critic = CriticNet::new(8, &cfg, &mut rng);
        let count_a = actor.n_params();
        let count_c = critic.n_params();
        for n_agents in [2usize, 8] {
            let xs = vec![vec![0.1; cfg.enc_hidden + 8]; n_agents];
            let (ys, _) = actor.brnn.forward(&xs);
            assert_eq!(ys.len(), n_agents);
        }
        assert_eq!(actor.n_params(), count_a);
        assert_eq!(critic.n_params(), count_c);
    }
}
