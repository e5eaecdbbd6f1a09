//! Experiment configuration: a TOML file whose defaults describe the
//! desk-scale experiment (5 mobiles, 10 edge servers in 2 regions, 1
//! cloud; 500 generated training jobs and a 100-job test set).

use mecsim_agents::{NetConfig, PolicyKind, TrainConfig};
use mecsim_core::env::EnvConfig;
use mecsim_core::metrics::{DeviceKind, DeviceProfile};
use mecsim_core::sim::ClusterConfig;
use mecsim_core::workload::{Range, WorkloadConfig};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub out_dir: String,
    pub seeds: Vec<u64>,
    pub policies: Vec<String>,
    pub cluster: ClusterSection,
    pub workload: WorkloadSection,
    pub env: EnvConfig,
    pub train: TrainConfig,
    pub net: NetConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            out_dir: "runs/out".into(),
            seeds: vec![1, 2, 3, 4, 5],
            policies: vec![
                "local".into(),
                "edge-first".into(),
                "dqn".into(),
                "drqn".into(),
                "comddpg".into(),
            ],
            cluster: ClusterSection::default(),
            workload: WorkloadSection::default(),
            env: default_env(),
            train: default_train(),
            net: default_net(),
        }
    }
}

fn default_env() -> EnvConfig {
    EnvConfig {
        max_pending: 8,
        window: 10,
        ..EnvConfig::default()
    }
}

fn default_train() -> TrainConfig {
    TrainConfig {
        update_every: 3,
        ..TrainConfig::default()
    }
}

fn default_net() -> NetConfig {
    NetConfig {
        action_width: 16,
        enc_channels: 8,
        attn_dim: 8,
        enc_hidden: 48,
        brnn_hidden: 32,
        q_hidden: 64,
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct ClusterSection {
    pub n_mobile: usize,
    pub m_edge: usize,
    pub n_regions: usize,
    pub step_ms: f64,
    pub max_steps: u64,
    pub mobile: DeviceProfile,
    pub edge: DeviceProfile,
    pub cloud: DeviceProfile,
}

impl Default for ClusterSection {
    fn default() -> Self {
        let channel = |kind: DeviceKind, p_full: f64, proc: f64, cap: f64, mem: f64| DeviceProfile {
            kind,
            p_full_watts: p_full,
            k_ratio: 0.5,
            proc_rate_cycles_per_s: proc,
            channel_gain: 1e-5,
            noise_watts: 1e-13,
            interference_watts: 0.0,
            bandwidth_hz: 1e6,
            tx_power_watts: 0.1,
            cpu_capacity_cycles_per_s: cap,
            mem_bytes: mem,
        };
        ClusterSection {
            n_mobile: 5,
            m_edge: 10,
            n_regions: 2,
            step_ms: 5.0,
            max_steps: 10_000_000,
            mobile: channel(DeviceKind::Mobile, 4.0, 1e9, 1e11, 1e9),
            edge: channel(DeviceKind::Edge, 150.0, 4e9, 4e9, 6.4e7),
            cloud: channel(DeviceKind::Cloud, 500.0, 1.6e10, 1.6e10, 1e9),
        }
    }
}

impl ClusterSection {
    pub fn build(&self) -> ClusterConfig {
        let mut cfg = ClusterConfig::symmetric(
            self.n_mobile,
            self.m_edge,
            self.n_regions,
            self.mobile.clone(),
            self.edge.clone(),
            self.cloud.clone(),
            self.step_ms,
        );
        cfg.max_steps = self.max_steps;
        cfg
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct WorkloadSection {
    /// "generate" or "trace".
    pub source: String,
    pub trace_path: Option<String>,
    pub n_train_jobs: usize,
    pub n_test_jobs: usize,
    pub train_seed: u64,
    pub test_seed: u64,
    pub subtasks_min: usize,
    pub subtasks_max: usize,
    pub edge_density: f64,
    pub data_in_bits: Range,
    pub data_out_bits: Range,
    pub cpu_cycles: Range,
    pub deadline_ms: Range,
    /// Submit window of the training corpus; sized so the job arrival rate
    /// matches the test window.
    pub train_window_ms: f64,
    pub test_window_ms: f64,
}

impl Default for WorkloadSection {
    fn default() -> Self {
        WorkloadSection {
            source: "generate".into(),
            trace_path: None,
            n_train_jobs: 500,
            n_test_jobs: 100,
            train_seed: 77,
            test_seed: 101,
            subtasks_min: 3,
            subtasks_max: 5,
            edge_density: 0.3,
            data_in_bits: Range::new(5.0e4, 3.0e5),
            data_out_bits: Range::new(2.0e4, 1.5e5),
            cpu_cycles: Range::new(1.0e7, 1.0e8),
            deadline_ms: Range::new(80.0, 400.0),
            train_window_ms: 3000.0,
            test_window_ms: 600.0,
        }
    }
}

impl WorkloadSection {
    fn generator(&self, n_jobs: usize, seed: u64, window_ms: f64, n_origin: usize) -> WorkloadConfig {
        WorkloadConfig {
            n_jobs,
            subtasks_min: self.subtasks_min,
            subtasks_max: self.subtasks_max,
            edge_density: self.edge_density,
            data_in_bits: self.data_in_bits,
            data_out_bits: self.data_out_bits,
            cpu_cycles: self.cpu_cycles,
            deadline_ms: self.deadline_ms,
            submit_window_ms: window_ms,
            n_origin_devices: n_origin,
            seed,
        }
    }

    pub fn train_generator(&self, n_origin: usize) -> WorkloadConfig {
        self.generator(self.n_train_jobs, self.train_seed, self.train_window_ms, n_origin)
    }

    pub fn test_generator(&self, n_origin: usize) -> WorkloadConfig {
        self.generator(self.n_test_jobs, self.test_seed, self.test_window_ms, n_origin)
    }
}

impl ExperimentConfig {
    pub fn load(path: &std::path::Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| anyhow::anyhow!("cannot read config {}: {e}", path.display()))?;
        let cfg: ExperimentConfig = toml::from_str(&text)
            .map_err(|e| anyhow::anyhow!("cannot parse config {}: {e}", path.display()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        if self.seeds.is_empty() {
            anyhow::bail!("seed list must not be empty");
        }
        if self.policies.is_empty() {
            anyhow::bail!("at least one policy must be listed");
        }
        for p in &self.policies {
            if PolicyKind::parse(p).is_none() {
                anyhow::bail!("unknown policy {p} (expected local|edge-first|dqn|drqn|comddpg)");
            }
        }
        if self.net.action_width < self.cluster.n_mobile + self.cluster.m_edge + 1 {
            anyhow::bail!(
                "net.action_width {} is smaller than the action space n+m+1 = {}",
                self.net.action_width,
                self.cluster.n_mobile + self.cluster.m_edge + 1
            );
        }
        if self.workload.source != "generate" && self.workload.source != "trace" {
            anyhow::bail!("workload.source must be \"generate\" or \"trace\"");
        }
        self.cluster
            .build()
            .validate()
            .map_err(|e| anyhow::anyhow!("invalid cluster: {e}"))?;
        self.env
            .validate()
            .map_err(|e| anyhow::anyhow!("invalid env section: {e}"))?;
        Ok(())
    }

    pub fn policy_kinds(&self) -> Vec<PolicyKind> {
        self.policies
            .iter()
            .map(|p| PolicyKind::parse(p).expect("validated"))
            .collect()
    }

    /// Serialize the fully resolved config (defaults applied) so a run can
    /// be reproduced bit-exactly from its output directory.
    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }
}
