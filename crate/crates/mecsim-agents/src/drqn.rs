use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use mecsim_core::env::{td_target, ActionMask, DecisionRound, OffloadEnv, Policy, Transition};
use mecsim_nn::{add_scaled, sgd_step, zeros_like};

use crate::nets::DrqnNet;
use crate::replay::ReplayBuffer;
use crate::trainer::{Learner, TrainConfig};
use crate::NetConfig;

/// Per-agent experience carrying the contiguous observation window.
pub struct DrqnSample {
    pub window: Vec<Arc<Vec<f64>>>,
    pub block: Vec<f64>,
    pub action: usize,
    pub reward: f64,
    pub next_window: Vec<Arc<Vec<f64>>>,
    pub next_block: Vec<f64>,
    pub next_mask: Option<ActionMask>,
    pub done: bool,
}

/// Recurrent Q-learning: the state estimate comes from the window encoder;
/// hidden state starts from zero each window, so episode boundaries reset.
pub struct DrqnAgent {
    pub online: DrqnNet,
    pub target: DrqnNet,
    pub buffer: ReplayBuffer<DrqnSample>,
    cfg: TrainConfig,
    n_real: usize,
    updates: u64,
    rng: ChaCha8Rng,
}

impl DrqnAgent {
    pub fn new(n_real_actions: usize, net: &NetConfig, cfg: TrainConfig) -> Self {
        assert!(net.action_width >= n_real_actions);
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let online = DrqnNet::new(mecsim_core::env::AGENT_BLOCK_WIDTH, net, &mut rng);
        let target = online.clone();
        let buffer = ReplayBuffer::new(cfg.replay_capacity, cfg.seed.wrapping_add(1));
        DrqnAgent {
            online,
            target,
            buffer,
            cfg,
            n_real: n_real_actions,
            updates: 0,
            rng,
        }
    }

    fn window_vecs(window: &[Arc<Vec<f64>>]) -> Vec<Vec<f64>> {
        window.iter().map(|o| o.as_ref().clone()).collect()
    }

    fn q_values(net: &DrqnNet, window: &[Arc<Vec<f64>>], block: &[f64]) -> Vec<f64> {
        let (h, _) = net.enc.forward(&Self::window_vecs(window));
        let mut mixed_in = h;
        mixed_in.extend_from_slice(block);
        let (hidden, _) = net.mix.forward(&mixed_in);
        let (q, _) = net.head.forward(&hidden);
        q
    }

    fn greedy(&self, window: &[Arc<Vec<f64>>], block: &[f64], mask: &ActionMask) -> usize {
        let q = Self::q_values(&self.online, window, block);
        crate::nets::masked_argmax(&q[..self.n_real], mask).expect("mask has a valid action")
    }
}

impl Learner for DrqnAgent {
    fn policy_name(&self) -> &'static str {
        "drqn"
    }

    fn select(&mut self, env: &OffloadEnv, round: &DecisionRound, explore: f64) -> Vec<usize> {
        let window = env.window();
        round
            .decisions
            .iter()
            .zip(&round.masks)
            .map(|(d, mask)| {
                if self.rng.gen_range(0.0..1.0) < explore {
                    let valid: Vec<usize> = (0..mask.len()).filter(|&a| mask.is_valid(a)).collect();
                    valid[self.rng.gen_range(0..valid.len())]
                } else {
                    self.greedy(&window, &round.agent_blocks[d.agent], mask)
                }
            })
            .collect()
    }

    fn observe(&mut self, tr: &Transition) {
        for agent in 0..tr.actions.len() {
            let Some(action) = tr.actions[agent] else {
                continue;
            };
            self.buffer.push(DrqnSample {
                window: tr.window_s.clone(),
                block: tr.agent_blocks[agent].clone(),
                action,
                reward: tr.rewards[agent],
                next_window: tr.window_next.clone(),
                next_block: tr.agent_blocks_next[agent].clone(),
                next_mask: tr.masks_next[agent].clone(),
                done: tr.done,
            });
        }
    }

    fn ready(&self) -> bool {
        self.buffer.len() >= self.cfg.batch
    }

    fn update(&mut self) -> f64 {
        let idx = self.buffer.sample_indices(self.cfg.batch);
        let m = idx.len() as f64;
        let mut grads = zeros_like(&self.online);
        let mut loss = 0.0;
        for i in idx {
            let sample = self.buffer.get(i);
            let next_q_all = Self::q_values(&self.target, &sample.next_window, &sample.next_block);
            let next_q = match &sample.next_mask {
                Some(mask) => crate::nets::masked_argmax(&next_q_all[..self.n_real], mask)
                    .map(|a| next_q_all[a])
                    .unwrap_or(0.0),
                None => next_q_all[..self.n_real]
                    .iter()
                    .cloned()
                    .fold(f64::NEG_INFINITY, f64::max),
            };
            let y = td_target(sample.reward, self.cfg.discount, next_q, sample.done);

            // Online pass with caches for the backward sweep.
            let window = Self::window_vecs(&sample.window);
            let (h, enc_cache) = self.online.enc.forward(&window);
            let mut mixed_in = h;
            mixed_in.extend_from_slice(&sample.block);
            let (hidden, mix_cache) = self.online.mix.forward(&mixed_in);
            let (q, head_cache) = self.online.head.forward(&hidden);
            let q_a = q[sample.action];
            loss += (q_a - y) * (q_a - y) / m;

            let mut dq = vec![0.0; q.len()];
            dq[sample.action] = 2.0 * (q_a - y) / m;
            let (dhidden, head_grads) = self.online.head.backward(&head_cache, &dq);
            let (dmixed, mix_grads) = self.online.mix.backward(&mix_cache, &dhidden);
            let enc_hidden = self.online.enc.hidden();
            let (_, enc_grads) = self.online.enc.backward(&enc_cache, &dmixed[..enc_hidden]);
            let mut sample_grads = enc_grads;
            sample_grads.extend(mix_grads);
            sample_grads.extend(head_grads);
            add_scaled(&mut grads, &sample_grads, 1.0);
        }
        sgd_step(&mut self.online, &grads, self.cfg.lr);
        self.updates += 1;
        if self.updates % self.cfg.epoch_period as u64 == 0 {
            self.target = self.online.clone();
        }
        loss
    }
}

/// Greedy evaluation wrapper.
pub struct GreedyDrqn(pub DrqnAgent);

impl Policy for GreedyDrqn {
    fn name(&self) -> &'static str {
        "drqn"
    }

    fn select_actions(&mut self, env: &OffloadEnv, round: &DecisionRound) -> Vec<usize> {
        let window = env.window();
        round
            .decisions
            .iter()
            .zip(&round.masks)
            .map(|(d, mask)| self.0.greedy(&window, &round.agent_blocks[d.agent], mask))
            .collect()
    }
}
