//! Multiagent actor-critic with shared parameters: a window encoder feeds a
//! BRNN over the agent axis in both the policy and the value network, so
//! every agent's action and value condition on all agents' inputs. Actions
//! are discrete device choices; the actor emits scores whose masked softmax
//! is the differentiable action representation (execution takes the masked
//! argmax, training passes gradients through the softmax).

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use mecsim_core::env::{
    td_target, ActionMask, DecisionRound, OffloadEnv, Policy, Transition,
};
use mecsim_nn::{add_scaled, sgd_step, soft_update, zeros_like, Params, Tensor2};

use crate::nets::{
    masked_argmax, masked_softmax, masked_softmax_backward, ActorNet, CriticNet,
};
use crate::replay::ReplayBuffer;
use crate::trainer::{Learner, TrainConfig};
use crate::NetConfig;

fn one_hot(action: usize, width: usize) -> Vec<f64> {
    let mut v = vec![0.0; width];
    v[action] = 1.0;
    v
}

fn window_vecs(window: &[Arc<Vec<f64>>]) -> Vec<Vec<f64>> {
    window.iter().map(|o| o.as_ref().clone()).collect()
}

/// Actor evaluation: per-agent scores over the padded action space.
fn actor_scores(
    actor: &ActorNet,
    window: &[Vec<f64>],
    blocks: &[Vec<f64>],
) -> Vec<Vec<f64>> {
    let (h, _) = actor.enc.forward(window);
    let xs: Vec<Vec<f64>> = blocks
        .iter()
        .map(|b| {
            let mut x = h.clone();
            x.extend_from_slice(b);
            x
        })
        .collect();
    let (ys, _) = actor.brnn.forward(&xs);
    ys.iter().map(|y| actor.head.forward(y).0).collect()
}

/// Critic evaluation: per-agent values given per-agent action vectors.
fn critic_values(
    critic: &CriticNet,
    window: &[Vec<f64>],
    blocks: &[Vec<f64>],
    actions: &[Vec<f64>],
) -> Vec<f64> {
    let (h, _) = critic.enc.forward(window);
    let xs: Vec<Vec<f64>> = blocks
        .iter()
        .zip(actions)
        .map(|(b, a)| {
            let mut x = h.clone();
            x.extend_from_slice(b);
            x.extend_from_slice(a);
            x
        })
        .collect();
    let (ys, _) = critic.brnn.forward(&xs);
    ys.iter().map(|y| critic.head.forward(y).0[0]).collect()
}

/// Target-policy action vectors at the next state: masked softmax of the
/// target actor's scores; agents without a decision get a virtual softmax
/// over the whole unpadded action set.
fn target_actions(
    target_actor: &ActorNet,
    tr: &Transition,
    n_real: usize,
) -> Vec<Vec<f64>> {
    let window = window_vecs(&tr.window_next);
    let scores = actor_scores(target_actor, &window, &tr.agent_blocks_next);
    scores
        .iter()
        .enumerate()
        .map(|(i, s)| masked_softmax(s, tr.masks_next[i].as_ref(), n_real))
        .collect()
}

/// Squared TD error of the critic over a mini-batch, with exact gradients
/// for the critic's parameters. Only agents that acted contribute terms.
pub fn critic_loss_and_grads(
    critic: &CriticNet,
    target_actor: &ActorNet,
    target_critic: &CriticNet,
    batch: &[&Transition],
    n_real: usize,
    discount: f64,
) -> (f64, Vec<Tensor2>) {
    let active_total: usize = batch
        .iter()
        .map(|tr| tr.actions.iter().flatten().count())
        .sum();
    let count = active_total.max(1) as f64;
    let mut grads = zeros_like(critic);
    let mut loss = 0.0;
    let width = critic_action_width(critic);
    for tr in batch {
        let next_actions = target_actions(target_actor, tr, n_real);
        let next_window = window_vecs(&tr.window_next);
        let q_next = critic_values(target_critic, &next_window, &tr.agent_blocks_next, &next_actions);

        let window = window_vecs(&tr.window_s);
        let exec_actions: Vec<Vec<f64>> = tr
            .actions
            .iter()
            .map(|a| match a {
                Some(a) => one_hot(*a, width),
                None => vec![0.0; width],
            })
            .collect();

        // Online pass with caches.
        let (h, enc_cache) = critic.enc.forward(&window);
        let xs: Vec<Vec<f64>> = tr
            .agent_blocks
            .iter()
            .zip(&exec_actions)
            .map(|(b, a)| {
                let mut x = h.clone();
                x.extend_from_slice(b);
                x.extend_from_slice(a);
                x
            })
            .collect();
        let (ys, brnn_cache) = critic.brnn.forward(&xs);
        let mut head_grads = zeros_like(&critic.head);
        let mut dys = vec![vec![0.0; critic.brnn.out_dim()]; ys.len()];
        for i in 0..ys.len() {
            let (q, head_cache) = critic.head.forward(&ys[i]);
            if tr.actions[i].is_none() {
                continue;
            }
            let y_target = td_target(tr.rewards[i], discount, q_next[i], tr.done);
            let err = q[0] - y_target;
            loss += err * err / count;
            let dq = vec![2.0 * err / count];
            let (dy, hg) = critic.head.backward(&head_cache, &dq);
            add_scaled(&mut head_grads, &hg, 1.0);
            dys[i] = dy;
        }
        let (dxs, brnn_grads) = critic.brnn.backward(&brnn_cache, &dys);
        let enc_hidden = critic.enc.hidden();
        let mut dh = vec![0.0; enc_hidden];
        for dx in &dxs {
            for (acc, v) in dh.iter_mut().zip(&dx[..enc_hidden]) {
                *acc += v;
            }
        }
        let (_, enc_grads) = critic.enc.backward(&enc_cache, &dh);
        let mut sample_grads = enc_grads;
        sample_grads.extend(brnn_grads);
        sample_grads.extend(head_grads);
        add_scaled(&mut grads, &sample_grads, 1.0);
    }
    (loss, grads)
}

fn critic_action_width(critic: &CriticNet) -> usize {
    // brnn input = enc_hidden + agent block + action width.
    critic.brnn.wf.cols - critic.enc.hidden() - mecsim_core::env::AGENT_BLOCK_WIDTH
}

/// Deterministic policy-gradient objective: minus the mean over the batch
/// of the summed per-agent values at the actor's (softmax-relaxed) actions,
/// with the critic frozen. Gradients flow from every agent's value through
/// every agent's action via the critic BRNN, then back through the actor's
/// softmax, head, BRNN and encoder by BPTT. Returns the loss and the exact
/// gradients for the actor's parameters.
pub fn actor_loss_and_grads(
    actor: &ActorNet,
    critic: &CriticNet,
    batch: &[&Transition],
    n_real: usize,
) -> (f64, Vec<Tensor2>) {
    let active_total: usize = batch
        .iter()
        .map(|tr| tr.actions.iter().flatten().count())
        .sum();
    let count = active_total.max(1) as f64;
    let width = critic_action_width(critic);
    let mut grads = zeros_like(actor);
    let mut loss = 0.0;
    for tr in batch {
        let window = window_vecs(&tr.window_s);

        // Actor pass with caches.
        let (h_a, actor_enc_cache) = actor.enc.forward(&window);
        let actor_xs: Vec<Vec<f64>> = tr
            .agent_blocks
            .iter()
            .map(|b| {
                let mut x = h_a.clone();
                x.extend_from_slice(b);
                x
            })
            .collect();
        let (actor_ys, actor_brnn_cache) = actor.brnn.forward(&actor_xs);
        let mut head_caches = Vec::with_capacity(actor_ys.len());
        let mut probs: Vec<Vec<f64>> = Vec::with_capacity(actor_ys.len());
        for (i, y) in actor_ys.iter().enumerate() {
            let (scores, cache) = actor.head.forward(y);
            head_caches.push(cache);
            if tr.actions[i].is_some() {
                probs.push(masked_softmax(&scores, tr.masks[i].as_ref(), n_real));
            } else {
                probs.push(vec![0.0; width]);
            }
        }

        // Frozen critic pass with caches.
        let (h_c, _) = critic.enc.forward(&window);
        let critic_xs: Vec<Vec<f64>> = tr
            .agent_blocks
            .iter()
            .zip(&probs)
            .map(|(b, a)| {
                let mut x = h_c.clone();
                x.extend_from_slice(b);
                x.extend_from_slice(a);
                x
            })
            .collect();
        let (critic_ys, critic_brnn_cache) = critic.brnn.forward(&critic_xs);
        let mut dys_critic = vec![vec![0.0; critic.brnn.out_dim()]; critic_ys.len()];
        for i in 0..critic_ys.len() {
            let (q, head_cache) = critic.head.forward(&critic_ys[i]);
            if tr.actions[i].is_none() {
                continue;
            }
            loss -= q[0] / count;
            let (dy, _) = critic.head.backward(&head_cache, &[-1.0 / count]);
            dys_critic[i] = dy;
        }
        // Gradients w.r.t. the critic's inputs; only the action slice flows
        // back to the actor.
        let (critic_dxs, _) = critic.brnn.backward(&critic_brnn_cache, &dys_critic);
        let enc_hidden_c = critic.enc.hidden();
        let block_w = mecsim_core::env::AGENT_BLOCK_WIDTH;

        let mut actor_head_grads = zeros_like(&actor.head);
        let mut actor_dys = vec![vec![0.0; actor.brnn.out_dim()]; actor_ys.len()];
        for i in 0..actor_ys.len() {
            if tr.actions[i].is_none() {
                continue;
            }
            let dprobs = &critic_dxs[i][enc_hidden_c + block_w..enc_hidden_c + block_w + width];
            let dscores = masked_softmax_backward(&probs[i], dprobs);
            let (dy, hg) = actor.head.backward(&head_caches[i], &dscores);
            add_scaled(&mut actor_head_grads, &hg, 1.0);
            actor_dys[i] = dy;
        }
        let (actor_dxs, actor_brnn_grads) = actor.brnn.backward(&actor_brnn_cache, &actor_dys);
        let enc_hidden_a = actor.enc.hidden();
        let mut dh = vec![0.0; enc_hidden_a];
        for dx in &actor_dxs {
            for (acc, v) in dh.iter_mut().zip(&dx[..enc_hidden_a]) {
                *acc += v;
            }
        }
        let (_, actor_enc_grads) = actor.enc.backward(&actor_enc_cache, &dh);
        let mut sample_grads = actor_enc_grads;
        sample_grads.extend(actor_brnn_grads);
        sample_grads.extend(actor_head_grads);
        add_scaled(&mut grads, &sample_grads, 1.0);
    }
    (loss, grads)
}

/// The Com-DDPG learner: shared actor/critic with target copies, replay
/// over joint transitions, per-update soft target updates.
pub struct ComDdpg {
    pub actor: ActorNet,
    pub critic: CriticNet,
    pub target_actor: ActorNet,
    pub target_critic: CriticNet,
    pub buffer: ReplayBuffer<Transition>,
    cfg: TrainConfig,
    n_real: usize,
    rng: ChaCha8Rng,
}

impl ComDdpg {
    pub fn new(n_real_actions: usize, net: &NetConfig, cfg: TrainConfig) -> Self {
        assert!(net.action_width >= n_real_actions);
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let actor = ActorNet::new(mecsim_core::env::AGENT_BLOCK_WIDTH, net, &mut rng);
        let critic = CriticNet::new(mecsim_core::env::AGENT_BLOCK_WIDTH, net, &mut rng);
        let target_actor = actor.clone();
        let target_critic = critic.clone();
        let buffer = ReplayBuffer::new(cfg.replay_capacity, cfg.seed.wrapping_add(1));
        ComDdpg {
            actor,
            critic,
            target_actor,
            target_critic,
            buffer,
            cfg,
            n_real: n_real_actions,
            rng,
        }
    }

    fn select_with_noise(
        &mut self,
        env: &OffloadEnv,
        round: &DecisionRound,
        noise: f64,
    ) -> Vec<usize> {
        let window = window_vecs(&env.window());
        let scores = actor_scores(&self.actor, &window, &round.agent_blocks);
        round
            .decisions
            .iter()
            .zip(&round.masks)
            .map(|(d, mask)| {
                let mut s = scores[d.agent].clone();
                if noise > 0.0 {
                    for v in s.iter_mut() {
                        let draw: f64 = StandardNormal.sample(&mut self.rng);
                        *v += noise * draw;
                    }
                }
                masked_argmax(&s[..self.n_real], mask).expect("mask has a valid action")
            })
            .collect()
    }
}

impl Learner for ComDdpg {
    fn policy_name(&self) -> &'static str {
        "comddpg"
    }

    fn select(&mut self, env: &OffloadEnv, round: &DecisionRound, explore: f64) -> Vec<usize> {
        self.select_with_noise(env, round, explore)
    }

    fn observe(&mut self, tr: &Transition) {
        self.buffer.push(tr.clone());
    }

    fn ready(&self) -> bool {
        self.buffer.len() >= self.cfg.batch
    }

    fn update(&mut self) -> f64 {
        let idx = self.buffer.sample_indices(self.cfg.batch);
        let batch: Vec<&Transition> = idx.iter().map(|&i| self.buffer.get(i)).collect();
        let (loss, critic_grads) = critic_loss_and_grads(
            &self.critic,
            &self.target_actor,
            &self.target_critic,
            &batch,
            self.n_real,
            self.cfg.discount,
        );
        let (_, actor_grads) = actor_loss_and_grads(&self.actor, &self.critic, &batch, self.n_real);
        drop(batch);
        sgd_step(&mut self.critic, &critic_grads, self.cfg.lr);
        sgd_step(&mut self.actor, &actor_grads, self.cfg.lr);
        soft_update(&mut self.target_actor, &self.actor, self.cfg.tau);
        soft_update(&mut self.target_critic, &self.critic, self.cfg.tau);
        loss
    }
}

/// Greedy evaluation wrapper (no exploration noise).
pub struct GreedyComDdpg(pub ComDdpg);

impl Policy for GreedyComDdpg {
    fn name(&self) -> &'static str {
        "comddpg"
    }

    fn select_actions(&mut self, env: &OffloadEnv, round: &DecisionRound) -> Vec<usize> {
        self.0.select_with_noise(env, round, 0.0)
    }
}

/// Build a tiny frozen instance and a synthetic mini-batch, then compare the
/// analytic actor gradient against central finite differences. Returns the
/// max relative error.
pub fn actor_gradcheck(seed: u64) -> f64 {
    use mecsim_nn::gradcheck::{flatten_grads, max_rel_err, numeric_grad, DEFAULT_H};

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let net = NetConfig {
        action_width: 4,
        enc_channels: 3,
        attn_dim: 3,
        enc_hidden: 4,
        brnn_hidden: 4,
        q_hidden: 4,
    };
    let n_real = 4;
    let n_agents = 3;
    let obs_dim = 6;
    let window_len = 3;
    let actor = ActorNet::new(mecsim_core::env::AGENT_BLOCK_WIDTH, &net, &mut rng);
    let critic = CriticNet::new(mecsim_core::env::AGENT_BLOCK_WIDTH, &net, &mut rng);

    let mut transitions = Vec::new();
    for _ in 0..2 {
        let mk_window = |rng: &mut ChaCha8Rng| -> Vec<Arc<Vec<f64>>> {
            (0..window_len)
                .map(|_| Arc::new((0..obs_dim).map(|_| rng.gen_range(-1.0..1.0)).collect()))
                .collect()
        };
        let mk_blocks = |rng: &mut ChaCha8Rng| -> Vec<Vec<f64>> {
            (0..n_agents)
                .map(|_| {
                    (0..mecsim_core::env::AGENT_BLOCK_WIDTH)
                        .map(|_| rng.gen_range(0.0..1.0))
                        .collect()
                })
                .collect()
        };
        let masks: Vec<Option<ActionMask>> = (0..n_agents)
            .map(|i| {
                if i == 2 {
                    None
                } else {
                    let mut valid = vec![0u8; n_real];
                    for v in valid.iter_mut() {
                        *v = u8::from(rng.gen_range(0.0..1.0) < 0.7);
                    }
                    valid[rng.gen_range(0..n_real)] = 1;
                    Some(ActionMask { valid })
                }
            })
            .collect();
        let actions: Vec<Option<usize>> = masks
            .iter()
            .map(|m| m.as_ref().map(|m| m.first_valid().unwrap()))
            .collect();
        transitions.push(Transition {
            window_s: mk_window(&mut rng),
            window_next: mk_window(&mut rng),
            agent_blocks: mk_blocks(&mut rng),
            agent_blocks_next: mk_blocks(&mut rng),
            masks: masks.clone(),
            masks_next: masks,
            actions,
            rewards: vec![0.1; n_agents],
            reward_global: 0.1,
            done: false,
        });
    }
    let batch: Vec<&Transition> = transitions.iter().collect();
    let (_, analytic) = actor_loss_and_grads(&actor, &critic, &batch, n_real);
    let numeric = numeric_grad(
        |flat: &[f64]| {
            let mut probe = actor.clone();
            probe.load_flat(flat).unwrap();
            actor_loss_and_grads(&probe, &critic, &batch, n_real).0
        },
        &actor.flatten(),
        DEFAULT_H,
    );
    max_rel_err(&flatten_grads(&analytic), &numeric)
}
