//! Offloading policies over the simulator environment: deterministic
//! baselines (local preference, edge first-fit) and three learners (DQN,
//! recurrent DQN, Com-DDPG with BRNN agent communication).

pub mod baselines;
pub mod comddpg;
pub mod dqn;
pub mod drqn;
pub mod logs;
pub mod nets;
pub mod replay;
pub mod runner;
pub mod trainer;

pub use baselines::{EdgeFirstPolicy, LocalPolicy};
pub use comddpg::ComDdpg;
pub use dqn::DqnAgent;
pub use drqn::DrqnAgent;
pub use logs::{EpisodeRow, TrainLog};
pub use replay::ReplayBuffer;
pub use runner::{greedy_policy, train_kind, PolicyKind};
pub use trainer::{eval_policy, placement_entropy, TrainConfig, TrainError};

/// Network width configuration shared by the learners. `action_width` pads
/// the action space so parameter counts stay independent of the cluster
/// size; it must be at least n + m + 1.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct NetConfig {
    pub action_width: usize,
    pub enc_channels: usize,
    pub attn_dim: usize,
    pub enc_hidden: usize,
    pub brnn_hidden: usize,
    pub q_hidden: usize,
}

impl Default for NetConfig {
    fn default() -> Self {
        NetConfig {
            action_width: 16,
            enc_channels: 8,
            attn_dim: 8,
            enc_hidden: 64,
            brnn_hidden: 32,
            q_hidden: 64,
        }
    }
}
