use mecsim_core::env::{
    DecisionRound, EnvConfig, OffloadEnv, Policy, RewardNormalizer, RoundEvent, RunOutput,
    Transition,
};
use mecsim_core::priority::ComparisonMatrix;
use mecsim_core::sim::{ClusterConfig, SimError, SimState};
use mecsim_core::workload::{blocks_by_submit_order, DagJob};
use serde::{Deserialize, Serialize};

use crate::logs::TrainLog;

#[derive(Debug, thiserror::Error)]
pub enum TrainError {
    #[error("{policy} training diverged (non-finite loss) at episode {episode}, seed {seed}")]
    Diverged {
        policy: String,
        seed: u64,
        episode: usize,
    },
    #[error(transparent)]
    Sim(#[from] SimError),
}

/// Table-3 style hyperparameters plus artifact knobs.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub episodes: usize,
    /// Mini-batch size M.
    pub batch: usize,
    /// SGD learning rate.
    pub lr: f64,
    /// Discount rate.
    pub discount: f64,
    /// Epoch period C: hard target refresh cadence for DQN/DRQN.
    pub epoch_period: usize,
    /// Soft-update coefficient for Com-DDPG targets.
    pub tau: f64,
    pub replay_capacity: usize,
    /// Run one gradient update every this many decision rounds.
    pub update_every: usize,
    /// Exploration scale decays linearly from start to end over the first
    /// 80% of episodes.
    pub noise_start: f64,
    pub noise_end: f64,
    /// Jobs per episode block.
    pub block_size: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            episodes: 200,
            batch: 16,
            lr: 0.005,
            discount: 0.9,
            epoch_period: 50,
            tau: 0.01,
            replay_capacity: 10_000,
            update_every: 2,
            noise_start: 1.0,
            noise_end: 0.05,
            block_size: 10,
            seed: 1,
        }
    }
}

impl TrainConfig {
    pub fn exploration(&self, episode: usize) -> f64 {
        let horizon = (self.episodes as f64 * 0.8).max(1.0);
        let frac = (episode as f64 / horizon).min(1.0);
        self.noise_start + (self.noise_end - self.noise_start) * frac
    }
}

/// One trainable agent family plugged into the episode driver.
pub trait Learner {
    fn policy_name(&self) -> &'static str;
    fn select(&mut self, env: &OffloadEnv, round: &DecisionRound, explore: f64) -> Vec<usize>;
    fn observe(&mut self, transition: &Transition);
    fn ready(&self) -> bool;
    /// One gradient step; returns the TD loss.
    fn update(&mut self) -> f64;
}

/// Episode driver shared by all learners: blocks of consecutive jobs are
/// replayed round-robin, the reward normalizer persists across episodes,
/// and one update runs every `update_every` stored transitions once the
/// buffer can fill a batch.
pub fn train_learner<L: Learner>(
    learner: &mut L,
    jobs: &[DagJob],
    cluster: &ClusterConfig,
    env_cfg: &EnvConfig,
    cfg: &TrainConfig,
) -> Result<TrainLog, TrainError> {
    let blocks = blocks_by_submit_order(jobs, cfg.block_size);
    let mut normalizer = RewardNormalizer::default();
    let mut log = TrainLog::new(learner.policy_name(), cfg.seed);
    let mut rounds_seen: u64 = 0;
    let mut last_loss = 0.0;
    for ep in 0..cfg.episodes {
        // Rebase the block's submit times so every episode starts at zero
        // with the workload's native arrival spacing.
        let mut block = blocks[ep % blocks.len()].clone();
        let t0 = block
            .iter()
            .map(|j| j.submit_time_ms)
            .fold(f64::INFINITY, f64::min);
        for job in &mut block {
            job.submit_time_ms -= t0;
        }
        let mut sim = SimState::init_cluster(cluster.clone(), &env_cfg.comparison)?;
        sim.load_jobs(&block)?;
        let mut env = OffloadEnv::new(sim, env_cfg.clone(), normalizer)?;
        let explore = cfg.exploration(ep);
        let mut losses = Vec::new();
        let mut rewards = Vec::new();
        loop {
            let (event, transition) = env.advance()?;
            if let Some(tr) = transition {
                rewards.push(tr.reward_global);
                learner.observe(&tr);
                rounds_seen += 1;
                if learner.ready() && rounds_seen % cfg.update_every as u64 == 0 {
                    let loss = learner.update();
                    if !loss.is_finite() {
                        return Err(TrainError::Diverged {
                            policy: learner.policy_name().to_string(),
                            seed: cfg.seed,
                            episode: ep,
                        });
                    }
                    losses.push(loss);
                }
            }
            match event {
                RoundEvent::Done => break,
                RoundEvent::Round(round) => {
                    let actions = learner.select(&env, &round, explore);
                    env.act(&round, &actions)?;
                }
            }
        }
        let makespans: Vec<f64> = env
            .sim
            .job_summaries()
            .iter()
            .map(|j| j.makespan_ms)
            .collect();
        log.masked_emissions += env.sim.masked_emissions();
        normalizer = env.into_normalizer();
        let td = if losses.is_empty() {
            last_loss
        } else {
            losses.iter().sum::<f64>() / losses.len() as f64
        };
        last_loss = td;
        let mean_reward = if rewards.is_empty() {
            0.0
        } else {
            rewards.iter().sum::<f64>() / rewards.len() as f64
        };
        log.push(ep, td, mean_reward, makespans);
    }
    Ok(log)
}

/// Evaluate any policy on a workload (no exploration, no learning).
pub fn eval_policy(
    policy: &mut dyn Policy,
    jobs: &[DagJob],
    cluster: &ClusterConfig,
    env_cfg: &EnvConfig,
) -> Result<RunOutput, SimError> {
    mecsim_core::env::run_policy(policy, jobs, cluster, env_cfg)
}

/// Shannon entropy (nats) of the decided-placement distribution.
pub fn placement_entropy(placements: &[(String, u64)]) -> f64 {
    let total: u64 = placements.iter().map(|(_, c)| c).sum();
    if total == 0 {
        return 0.0;
    }
    placements
        .iter()
        .filter(|(_, c)| *c > 0)
        .map(|(_, c)| {
            let p = *c as f64 / total as f64;
            -p * p.ln()
        })
        .sum()
}

/// Convenience: build the default comparison matrix (used by configs that
/// omit it).
pub fn default_comparison() -> ComparisonMatrix {
    ComparisonMatrix::default_factors()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exploration_decays_linearly_with_floor() {
        let cfg = TrainConfig {
            episodes: 100,
            noise_start: 1.0,
            noise_end: 0.0,
            ..TrainConfig::default()
        };
        assert_eq!(cfg.exploration(0), 1.0);
        assert!((cfg.exploration(40) - 0.5).abs() < 1e-12);
        assert_eq!(cfg.exploration(80), 0.0);
        assert_eq!(cfg.exploration(99), 0.0);
    }

    #[test]
    fn entropy_of_concentrated_and_uniform_placements() {
        let uniform: Vec<(String, u64)> = (0..4).map(|i| (format!("d{i}"), 5u64)).collect();
        let point = vec![("d0".to_string(), 20u64), ("d1".to_string(), 0)];
        assert!((placement_entropy(&uniform) - (4.0f64).ln()).abs() < 1e-12);
        assert_eq!(placement_entropy(&point), 0.0);
        assert_eq!(placement_entropy(&[]), 0.0);
    }
}
