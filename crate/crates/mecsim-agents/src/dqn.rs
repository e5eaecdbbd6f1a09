use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use mecsim_core::env::{td_target, ActionMask, DecisionRound, OffloadEnv, Policy, Transition};
use mecsim_nn::{add_scaled, sgd_step, zeros_like};

use crate::nets::QMlp;
use crate::replay::ReplayBuffer;
use crate::trainer::{Learner, TrainConfig};
use crate::NetConfig;

/// Per-agent experience: the agent's view of one decision round.
pub struct DqnSample {
    pub obs: Arc<Vec<f64>>,
    pub block: Vec<f64>,
    pub action: usize,
    pub reward: f64,
    pub next_obs: Arc<Vec<f64>>,
    pub next_block: Vec<f64>,
    pub next_mask: Option<ActionMask>,
    pub done: bool,
}

/// Masked epsilon-greedy Q-learning over the current observation; the
/// shared Q-network serves every agent.
pub struct DqnAgent {
    pub online: QMlp,
    pub target: QMlp,
    pub buffer: ReplayBuffer<DqnSample>,
    cfg: TrainConfig,
    n_real: usize,
    updates: u64,
    rng: ChaCha8Rng,
    /// Greedy when false (evaluation mode via the `Policy` impl).
    pub explore_scale: f64,
}

impl DqnAgent {
    pub fn new(obs_dim: usize, n_real_actions: usize, net: &NetConfig, cfg: TrainConfig) -> Self {
        assert!(net.action_width >= n_real_actions);
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let online = QMlp::new(obs_dim + mecsim_core::env::AGENT_BLOCK_WIDTH, net, &mut rng);
        let target = online.clone();
        let buffer = ReplayBuffer::new(cfg.replay_capacity, cfg.seed.wrapping_add(1));
        DqnAgent {
            online,
            target,
            buffer,
            cfg,
            n_real: n_real_actions,
            updates: 0,
            rng,
            explore_scale: 0.0,
        }
    }

    fn input(obs: &[f64], block: &[f64]) -> Vec<f64> {
        let mut x = Vec::with_capacity(obs.len() + block.len());
        x.extend_from_slice(obs);
        x.extend_from_slice(block);
        x
    }

    fn greedy(&self, obs: &[f64], block: &[f64], mask: &ActionMask) -> usize {
        let (q, _) = self.online.forward(&Self::input(obs, block));
        crate::nets::masked_argmax(&q[..self.n_real.min(q.len())], mask)
            .expect("mask has a valid action")
    }

    fn epsilon_greedy(&mut self, obs: &[f64], block: &[f64], mask: &ActionMask, eps: f64) -> usize {
        if self.rng.gen_range(0.0..1.0) < eps {
            let valid: Vec<usize> = (0..mask.len()).filter(|&a| mask.is_valid(a)).collect();
            valid[self.rng.gen_range(0..valid.len())]
        } else {
            self.greedy(obs, block, mask)
        }
    }

    /// Max Q of the target network over the valid (or virtual all-valid)
    /// action set.
    fn target_value(&self, sample: &DqnSample) -> f64 {
        let (q, _) = self
            .target
            .forward(&Self::input(&sample.next_obs, &sample.next_block));
        let best = match &sample.next_mask {
            Some(mask) => crate::nets::masked_argmax(&q[..self.n_real], mask)
                .map(|a| q[a])
                .unwrap_or(0.0),
            None => q[..self.n_real]
                .iter()
                .cloned()
                .fold(f64::NEG_INFINITY, f64::max),
        };
        best
    }
}

impl Learner for DqnAgent {
    fn policy_name(&self) -> &'static str {
        "dqn"
    }

    fn select(&mut self, _env: &OffloadEnv, round: &DecisionRound, explore: f64) -> Vec<usize> {
        round
            .decisions
            .iter()
            .zip(&round.masks)
            .map(|(d, mask)| {
                self.epsilon_greedy(&round.obs, &round.agent_blocks[d.agent], mask, explore)
            })
            .collect()
    }

    fn observe(&mut self, tr: &Transition) {
        let obs = tr.window_s.last().expect("window not empty").clone();
        let next_obs = tr.window_next.last().expect("window not empty").clone();
        for agent in 0..tr.actions.len() {
            let Some(action) = tr.actions[agent] else {
                continue;
            };
            self.buffer.push(DqnSample {
                obs: Arc::clone(&obs),
                block: tr.agent_blocks[agent].clone(),
                action,
                reward: tr.rewards[agent],
                next_obs: Arc::clone(&next_obs),
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
            let (y, q_a, dq) = {
                let sample = self.buffer.get(i);
                let next_q = self.target_value(sample);
                let y = td_target(sample.reward, self.cfg.discount, next_q, sample.done);
                let x = Self::input(&sample.obs, &sample.block);
                let (q, cache) = self.online.forward(&x);
                let q_a = q[sample.action];
                let mut dq = vec![0.0; q.len()];
                dq[sample.action] = 2.0 * (q_a - y) / m;
                (y, q_a, self.online.backward(&cache, &dq))
            };
            loss += (q_a - y) * (q_a - y) / m;
            add_scaled(&mut grads, &dq, 1.0);
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
pub struct GreedyDqn(pub DqnAgent);

impl Policy for GreedyDqn {
    fn name(&self) -> &'static str {
        "dqn"
    }

    fn select_actions(&mut self, _env: &OffloadEnv, round: &DecisionRound) -> Vec<usize> {
        round
            .decisions
            .iter()
            .zip(&round.masks)
            .map(|(d, mask)| self.0.greedy(&round.obs, &round.agent_blocks[d.agent], mask))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn agent(n_real: usize) -> DqnAgent {
        let net = NetConfig {
            action_width: n_real + 1,
            q_hidden: 8,
            ..NetConfig::default()
        };
        DqnAgent::new(4, n_real, &net, TrainConfig::default())
    }

    #[test]
    fn pure_exploration_is_uniform_over_valid_entries() {
        let mut a = agent(3);
        let mask = ActionMask {
            valid: vec![1, 0, 1],
        };
        let obs = vec![0.0; 4];
        let block = vec![0.0; mecsim_core::env::AGENT_BLOCK_WIDTH];
        let mut counts = [0u32; 3];
        let draws = 4000;
        for _ in 0..draws {
            counts[a.epsilon_greedy(&obs, &block, &mask, 1.0)] += 1;
        }
        assert_eq!(counts[1], 0);
        // Two valid arms, expectation 2000, sd ~ 31.6; allow 5 sigma.
        for &c in [counts[0], counts[2]].iter() {
            assert!((c as f64 - 2000.0).abs() < 160.0, "count {c}");
        }
    }

    #[test]
    fn pure_exploitation_follows_hand_set_q() {
        let mut a = agent(3);
        // Force the head to prefer action 2 via its bias.
        for v in a.online.head.b.data.iter_mut() {
            *v = 0.0;
        }
        a.online.head.b.data[2] = 10.0;
        for row in 0..a.online.head.w.rows {
            for col in 0..a.online.head.w.cols {
                a.online.head.w.set(row, col, 0.0);
            }
        }
        let mask = ActionMask {
            valid: vec![1, 1, 1],
        };
        let obs = vec![0.1; 4];
        let block = vec![0.2; mecsim_core::env::AGENT_BLOCK_WIDTH];
        for _ in 0..10 {
            assert_eq!(a.epsilon_greedy(&obs, &block, &mask, 0.0), 2);
        }
        // When device 2 is masked the agent falls elsewhere.
        let masked = ActionMask {
            valid: vec![1, 1, 0],
        };
        assert_ne!(a.epsilon_greedy(&obs, &block, &masked, 0.0), 2);
    }
}
