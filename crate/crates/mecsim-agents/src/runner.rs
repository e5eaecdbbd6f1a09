//! Uniform dispatch over the five policies: training for the learners,
//! checkpoint parameter handling and greedy evaluation wrappers.

use mecsim_core::env::{EnvConfig, Policy};
use mecsim_core::sim::ClusterConfig;
use mecsim_core::workload::DagJob;
use mecsim_nn::Params;
use serde::{Deserialize, Serialize};

use crate::comddpg::{ComDdpg, GreedyComDdpg};
use crate::dqn::{DqnAgent, GreedyDqn};
use crate::drqn::{DrqnAgent, GreedyDrqn};
use crate::logs::TrainLog;
use crate::trainer::{train_learner, TrainConfig, TrainError};
use crate::{EdgeFirstPolicy, LocalPolicy, NetConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PolicyKind {
    Local,
    EdgeFirst,
    Dqn,
    Drqn,
    Comddpg,
}

impl PolicyKind {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "local" => Some(PolicyKind::Local),
            "edge-first" => Some(PolicyKind::EdgeFirst),
            "dqn" => Some(PolicyKind::Dqn),
            "drqn" => Some(PolicyKind::Drqn),
            "comddpg" => Some(PolicyKind::Comddpg),
            _ => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            PolicyKind::Local => "local",
            PolicyKind::EdgeFirst => "edge-first",
            PolicyKind::Dqn => "dqn",
            PolicyKind::Drqn => "drqn",
            PolicyKind::Comddpg => "comddpg",
        }
    }

    pub fn is_learner(&self) -> bool {
        matches!(self, PolicyKind::Dqn | PolicyKind::Drqn | PolicyKind::Comddpg)
    }
}

impl std::fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.name())
    }
}

/// Train one learner and return its log plus flat checkpoint parameters
/// (for Com-DDPG: actor parameters followed by critic parameters).
pub fn train_kind(
    kind: PolicyKind,
    jobs: &[DagJob],
    cluster: &ClusterConfig,
    env_cfg: &EnvConfig,
    net_cfg: &NetConfig,
    train_cfg: &TrainConfig,
) -> Result<(TrainLog, Vec<f64>), TrainError> {
    let n_real = cluster.device_count();
    let obs_dim = env_cfg.obs_dim(cluster.device_count() - 1);
    match kind {
        PolicyKind::Dqn => {
            let mut agent = DqnAgent::new(obs_dim, n_real, net_cfg, train_cfg.clone());
            let log = train_learner(&mut agent, jobs, cluster, env_cfg, train_cfg)?;
            let params = agent.online.flatten();
            Ok((log, params))
        }
        PolicyKind::Drqn => {
            let mut agent = DrqnAgent::new(n_real, net_cfg, train_cfg.clone());
            let log = train_learner(&mut agent, jobs, cluster, env_cfg, train_cfg)?;
            let params = agent.online.flatten();
            Ok((log, params))
        }
        PolicyKind::Comddpg => {
            let mut agent = ComDdpg::new(n_real, net_cfg, train_cfg.clone());
            let log = train_learner(&mut agent, jobs, cluster, env_cfg, train_cfg)?;
            let mut params = agent.actor.flatten();
            params.extend(agent.critic.flatten());
            Ok((log, params))
        }
        other => panic!("{} is not a learner", other.name()),
    }
}

/// Build an evaluation policy. Learners require checkpoint parameters in
/// the layout produced by [`train_kind`]; baselines ignore them.
pub fn greedy_policy(
    kind: PolicyKind,
    cluster: &ClusterConfig,
    env_cfg: &EnvConfig,
    net_cfg: &NetConfig,
    params: Option<&[f64]>,
    seed: u64,
) -> Result<Box<dyn Policy>, String> {
    let n_real = cluster.device_count();
    let obs_dim = env_cfg.obs_dim(cluster.device_count() - 1);
    let cfg = TrainConfig {
        seed,
        ..TrainConfig::default()
    };
    match kind {
        PolicyKind::Local => Ok(Box::new(LocalPolicy)),
        PolicyKind::EdgeFirst => Ok(Box::new(EdgeFirstPolicy)),
        PolicyKind::Dqn => {
            let mut agent = DqnAgent::new(obs_dim, n_real, net_cfg, cfg);
            let flat = params.ok_or("dqn needs checkpoint parameters")?;
            agent.online.load_flat(flat).map_err(|e| e.to_string())?;
            agent.target = agent.online.clone();
            Ok(Box::new(GreedyDqn(agent)))
        }
        PolicyKind::Drqn => {
            let mut agent = DrqnAgent::new(n_real, net_cfg, cfg);
            let flat = params.ok_or("drqn needs checkpoint parameters")?;
            agent.online.load_flat(flat).map_err(|e| e.to_string())?;
            agent.target = agent.online.clone();
            Ok(Box::new(GreedyDrqn(agent)))
        }
        PolicyKind::Comddpg => {
            let mut agent = ComDdpg::new(n_real, net_cfg, cfg);
            let flat = params.ok_or("comddpg needs checkpoint parameters")?;
            let actor_len = agent.actor.n_params();
            if flat.len() != actor_len + agent.critic.n_params() {
                return Err(format!(
                    "comddpg checkpoint has {} parameters, expected {}",
                    flat.len(),
                    actor_len + agent.critic.n_params()
                ));
            }
            agent
                .actor
                .load_flat(&flat[..actor_len])
                .map_err(|e| e.to_string())?;
            agent
                .critic
                .load_flat(&flat[actor_len..])
                .map_err(|e| e.to_string())?;
            agent.target_actor = agent.actor.clone();
            agent.target_critic = agent.critic.clone();
            Ok(Box::new(GreedyComDdpg(agent)))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn policy_names_round_trip() {
        for name in ["local", "edge-first", "dqn", "drqn", "comddpg"] {
            let kind = PolicyKind::parse(name).unwrap();
            assert_eq!(kind.name(), name);
        }
        assert!(PolicyKind::parse("unknown").is_none());
        assert!(!PolicyKind::Local.is_learner());
        assert!(PolicyKind::Comddpg.is_learner());
    }
}
