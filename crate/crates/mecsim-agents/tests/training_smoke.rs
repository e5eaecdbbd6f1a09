//! Short end-to-end training runs for each learner: losses stay finite,
//! logs are well-formed, and no masked action is ever emitted.

use mecsim_agents::{
    comddpg::ComDdpg, dqn::DqnAgent, drqn::DrqnAgent, trainer::train_learner, NetConfig,
    TrainConfig,
};
use mecsim_core::env::EnvConfig;
use mecsim_core::metrics::{DeviceKind, DeviceProfile};
use mecsim_core::sim::ClusterConfig;
use mecsim_core::workload::{generate_synthetic, Range, WorkloadConfig};

fn profile(kind: DeviceKind, cap: f64, proc: f64, p_full: f64) -> DeviceProfile {
    DeviceProfile {
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
        mem_bytes: 1e9,
    }
}

fn smoke_setup() -> (ClusterConfig, EnvConfig, TrainConfig, Vec<mecsim_core::DagJob>) {
    let cluster = ClusterConfig::symmetric(
        3,
        4,
        2,
        profile(DeviceKind::Mobile, 1e11, 1e9, 4.0),
        profile(DeviceKind::Edge, 4e9, 4e9, 150.0),
        profile(DeviceKind::Cloud, 1.6e10, 1.6e10, 500.0),
        5.0,
    );
    let env_cfg = EnvConfig {
        max_pending: 6,
        window: 4,
        ..EnvConfig::default()
    };
    let train_cfg = TrainConfig {
        episodes: 6,
        update_every: 4,
        seed: 9,
        ..TrainConfig::default()
    };
    let jobs = generate_synthetic(&WorkloadConfig {
        n_jobs: 30,
        subtasks_min: 3,
        subtasks_max: 5,
        edge_density: 0.3,
        cpu_cycles: Range::new(2e7, 1.5e8),
        deadline_ms: Range::new(60.0, 250.0),
        n_origin_devices: 3,
        seed: 4,
        ..WorkloadConfig::default()
    })
    .unwrap();
    (cluster, env_cfg, train_cfg, jobs)
}

#[test]
fn dqn_short_run_trains_cleanly() {
    let (cluster, env_cfg, train_cfg, jobs) = smoke_setup();
    let obs_dim = env_cfg.obs_dim(cluster.device_count() - 1);
    let net = NetConfig {
        action_width: cluster.device_count(),
        q_hidden: 16,
        ..NetConfig::default()
    };
    let mut agent = DqnAgent::new(obs_dim, cluster.device_count(), &net, train_cfg.clone());
    let log = train_learner(&mut agent, &jobs, &cluster, &env_cfg, &train_cfg).unwrap();
    assert_eq!(log.rows.len(), train_cfg.episodes);
    assert!(log.rows.iter().all(|r| r.td_loss.is_finite()));
    assert!(log.rows.iter().all(|r| r.makespan_median_ms > 0.0));
}

#[test]
fn drqn_short_run_trains_cleanly() {
    let (cluster, env_cfg, train_cfg, jobs) = smoke_setup();
    let net = NetConfig {
        action_width: cluster.device_count(),
        enc_channels: 4,
        attn_dim: 4,
        enc_hidden: 8,
        q_hidden: 8,
        ..NetConfig::default()
    };
    let mut agent = DrqnAgent::new(cluster.device_count(), &net, train_cfg.clone());
    let log = train_learner(&mut agent, &jobs, &cluster, &env_cfg, &train_cfg).unwrap();
    assert_eq!(log.rows.len(), train_cfg.episodes);
    assert!(log.rows.iter().all(|r| r.td_loss.is_finite()));
}

#[test]
fn comddpg_short_run_trains_cleanly() {
    let (cluster, env_cfg, train_cfg, jobs) = smoke_setup();
    let net = NetConfig {
        action_width: cluster.device_count(),
        enc_channels: 4,
        attn_dim: 4,
        enc_hidden: 8,
        brnn_hidden: 8,
        q_hidden: 8,
    };
    let mut agent = ComDdpg::new(cluster.device_count(), &net, train_cfg.clone());
    let log = train_learner(&mut agent, &jobs, &cluster, &env_cfg, &train_cfg).unwrap();
    assert_eq!(log.rows.len(), train_cfg.episodes);
    assert!(log.rows.iter().all(|r| r.td_loss.is_finite()));
}

#[test]
fn zero_episodes_leave_parameters_at_initialization() {
    let (cluster, env_cfg, mut train_cfg, jobs) = smoke_setup();
    train_cfg.episodes = 0;
    let net = NetConfig {
        action_width: cluster.device_count(),
        q_hidden: 8,
        ..NetConfig::default()
    };
    use mecsim_nn::Params;
    let fresh = DqnAgent::new(
        env_cfg.obs_dim(cluster.device_count() - 1),
        cluster.device_count(),
        &net,
        train_cfg.clone(),
    );
    let init = fresh.online.flatten();
    let mut agent = DqnAgent::new(
        env_cfg.obs_dim(cluster.device_count() - 1),
        cluster.device_count(),
        &net,
        train_cfg.clone(),
    );
    let log = train_learner(&mut agent, &jobs, &cluster, &env_cfg, &train_cfg).unwrap();
    assert!(log.rows.is_empty());
    assert_eq!(agent.online.flatten(), init);
}
