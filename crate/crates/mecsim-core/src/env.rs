//! Agent-facing surface of the simulator: observation assembly, valid-action
//! masking, reward shaping with running z-score normalization, and the
//! decision-round driver that turns a simulation into an RL episode.

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::metrics::{DeviceProfile, MetricsReport, RunningZScore};
use crate::priority::ComparisonMatrix;
use crate::sim::{
    report_from_run, AgentDecision, ClusterConfig, Decision, EventLog, IntervalAccum, SimError,
    SimState, TaskPhase,
};
use crate::workload::DagJob;

/// Width of the per-pending-subtask observation row:
/// [c_in, n_dow, cycles, c_out, n_up, pv, valid].
pub const OBS_ROW_WIDTH: usize = 7;
/// Width of the per-agent block appended to the shared observation:
/// [has_task, c_in, n_dow, cycles, c_out, n_up, pv, own_cpu_usage].
pub const AGENT_BLOCK_WIDTH: usize = 8;

/// Observation normalization maxima.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct NormConfig {
    pub max_data_bits: f64,
    pub max_cycles: f64,
    pub max_rate_bps: f64,
}

impl Default for NormConfig {
    fn default() -> Self {
        NormConfig {
            max_data_bits: 1.0e6,
            max_cycles: 2.5e8,
            max_rate_bps: 2.4e7,
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default)]
pub struct RewardWeights {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
}

impl Default for RewardWeights {
    fn default() -> Self {
        RewardWeights {
            alpha: 1.0 / 3.0,
            beta: 1.0 / 3.0,
            gamma: 1.0 / 3.0,
        }
    }
}

impl RewardWeights {
    pub fn validate(&self) -> Result<(), SimError> {
        if self.alpha < 0.0 || self.beta < 0.0 || self.gamma < 0.0 {
            return Err(SimError::Config("reward weights must be non-negative".into()));
        }
        if (self.alpha + self.beta + self.gamma - 1.0).abs() > 1e-9 {
            return Err(SimError::Config("reward weights must sum to 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct EnvConfig {
    /// Fixed observation width in pending subtasks; overflow waits unseen.
    pub max_pending: usize,
    pub norm: NormConfig,
    pub weights: RewardWeights,
    /// Load-indicator weights (CPU, memory); must sum to one.
    pub load_weights: [f64; 2],
    pub comparison: ComparisonMatrix,
    pub invalid_action_penalty: f64,
    /// Observation-window length W fed to recurrent policies.
    pub window: usize,
}

impl Default for EnvConfig {
    fn default() -> Self {
        EnvConfig {
            max_pending: 32,
            norm: NormConfig::default(),
            weights: RewardWeights::default(),
            load_weights: [0.7, 0.3],
            comparison: ComparisonMatrix::default_factors(),
            invalid_action_penalty: 1.0,
            window: 10,
        }
    }
}

impl EnvConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        self.weights.validate()?;
        if (self.load_weights.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(SimError::Config("load weights must sum to 1".into()));
        }
        if self.max_pending == 0 || self.window == 0 {
            return Err(SimError::Config("max_pending and window must be positive".into()));
        }
        // Deserialized configs bypass the constructor; re-check the matrix.
        ComparisonMatrix::new(*self.comparison.entries())
            .map_err(|e| SimError::Config(e.to_string()))?;
        Ok(())
    }

    /// Length of the flattened observation vector for `n_obs_devices`
    /// mobile-plus-edge devices (slot-validity flag, pending rows, load
    /// vector, usage vector).
    pub fn obs_dim(&self, n_obs_devices: usize) -> usize {
        1 + self.max_pending * OBS_ROW_WIDTH + 2 * n_obs_devices
    }
}

/// Fixed-width flattened state tuple.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub data: Vec<f64>,
    pub n_rows: usize,
}

/// Per-decidable-subtask validity vector over the ego-indexed action space
/// (index 0 = local execution on the agent's own device).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ActionMask {
    pub valid: Vec<u8>,
}

impl ActionMask {
    pub fn len(&self) -> usize {
        self.valid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.valid.is_empty()
    }

    pub fn is_valid(&self, action: usize) -> bool {
        self.valid.get(action).copied().unwrap_or(0) == 1
    }

    pub fn any_valid(&self) -> bool {
        self.valid.iter().any(|&v| v == 1)
    }

    pub fn first_valid(&self) -> Option<usize> {
        self.valid.iter().position(|&v| v == 1)
    }
}

/// Map an agent-relative action to a global device index: action 0 is the
/// agent's own device; actions 1.. enumerate the remaining devices in
/// global order with the agent's device skipped.
pub fn ego_to_global(agent_device: usize, action: usize, n_devices: usize) -> Option<usize> {
    if action == 0 {
        return Some(agent_device);
    }
    let j = action - 1;
    if j >= n_devices - 1 {
        return None;
    }
    Some(if j < agent_device { j } else { j + 1 })
}

/// Inverse of [`ego_to_global`].
pub fn global_to_ego(agent_device: usize, device: usize) -> usize {
    if device == agent_device {
        0
    } else if device < agent_device {
        device + 1
    } else {
        device
    }
}

/// Alg-1 mask of one subtask over the ego-indexed action space. A pinned
/// subtask admits only local execution; otherwise a device is valid iff the
/// required resources do not exceed the available ones (equality admits).
pub fn valid_actions(sim: &SimState, task: usize) -> ActionMask {
    let n = sim.device_count();
    let origin = sim.task_origin(task);
    let mut valid = vec![0u8; n];
    if sim.task_pinned(task) {
        valid[0] = 1;
        return ActionMask { valid };
    }
    for (slot, v) in valid.iter_mut().enumerate() {
        let device = ego_to_global(origin, slot, n).expect("slot in range");
        *v = u8::from(sim.fits(task, device));
    }
    ActionMask { valid }
}

/// Deterministic observation of the current simulator state. Pending
/// subtasks are listed in global priority order, truncated and zero-padded
/// to the configured width; each row carries a validity flag. Index 0 of
/// the vector is the window-slot validity flag (always 1 for a real
/// observation) used when windows are left-padded.
pub fn observe(sim: &SimState, cfg: &EnvConfig) -> Observation {
    let n_obs_devices = sim.device_count() - 1; // cloud excluded
    let mut data = Vec::with_capacity(cfg.obs_dim(n_obs_devices));
    data.push(1.0);
    let queued = sim.queued_by_priority();
    let n_rows = queued.len().min(cfg.max_pending);
    for &(task, pv) in queued.iter().take(cfg.max_pending) {
        let (c_in, c_out, cycles) = sim.task_data(task);
        let share = sim.channel_share_bps(sim.task_origin(task));
        data.push(c_in / cfg.norm.max_data_bits);
        data.push(share / cfg.norm.max_rate_bps);
        data.push(cycles / cfg.norm.max_cycles);
        data.push(c_out / cfg.norm.max_data_bits);
        data.push(share / cfg.norm.max_rate_bps);
        data.push(pv);
        data.push(1.0);
    }
    for _ in n_rows..cfg.max_pending {
        data.extend_from_slice(&[0.0; OBS_ROW_WIDTH]);
    }
    for d in 0..n_obs_devices {
        let load =
            cfg.load_weights[0] * sim.usage_now(d) + cfg.load_weights[1] * sim.mem_usage_now(d);
        data.push(load);
    }
    for d in 0..n_obs_devices {
        data.push(sim.usage_now(d));
    }
    Observation { data, n_rows }
}

/// Reward kernel over standardized components:
/// `R = -(alpha*z_en + beta*(z_la + p_bar) + gamma*z_ls)`.
pub fn reward_from_z(z_en: f64, z_la: f64, p_bar: f64, z_ls: f64, w: &RewardWeights) -> f64 {
    -(w.alpha * z_en + w.beta * (z_la + p_bar) + w.gamma * z_ls)
}

/// TD target: `r + discount * next_q` unless terminal.
pub fn td_target(reward: f64, discount: f64, next_q: f64, terminal: bool) -> f64 {
    if terminal {
        reward
    } else {
        reward + discount * next_q
    }
}

/// Running z-score accumulators for the reward components, shared across an
/// entire training run.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct RewardNormalizer {
    pub energy: RunningZScore,
    pub latency: RunningZScore,
    pub load: RunningZScore,
    pub agent_energy: RunningZScore,
    pub agent_latency: RunningZScore,
}

/// Compute the global and per-agent rewards of one interval and fold the
/// interval's components into the normalizer.
pub fn reward(
    interval: &IntervalAccum,
    cfg: &EnvConfig,
    norm: &mut RewardNormalizer,
    n_agents: usize,
) -> (f64, Vec<f64>) {
    // Interval load status: RMS deviation of per-device weighted load
    // integrals from the cluster mean.
    let n_dev = interval.cpu_time_s.len();
    let loads: Vec<f64> = (0..n_dev)
        .map(|d| {
            cfg.load_weights[0] * interval.cpu_time_s[d] + cfg.load_weights[1] * interval.mem_time_s[d]
        })
        .collect();
    let mean = loads.iter().sum::<f64>() / n_dev.max(1) as f64;
    let ls = (loads.iter().map(|l| (l - mean) * (l - mean)).sum::<f64>() / n_dev.max(1) as f64)
        .sqrt();

    let z_en = norm.energy.z_then_update(interval.energy_j);
    let z_la = norm.latency.z_then_update(interval.latency_ms_sum);
    let z_ls = norm.load.z_then_update(ls);
    let penalty_total: f64 = interval.penalties.iter().sum();
    let global = reward_from_z(z_en, z_la, interval.tardiness, z_ls, &cfg.weights)
        - cfg.invalid_action_penalty * penalty_total;

    let mut per_agent = Vec::with_capacity(n_agents);
    for i in 0..n_agents {
        let z_en_i = norm.agent_energy.z(interval.energy_by_agent[i]);
        let z_la_i = norm.agent_latency.z(interval.latency_by_agent[i]);
        per_agent.push(
            reward_from_z(z_en_i, z_la_i, interval.tardiness_by_agent[i], z_ls, &cfg.weights)
                - cfg.invalid_action_penalty * interval.penalties[i],
        );
    }
    for i in 0..n_agents {
        norm.agent_energy.update(interval.energy_by_agent[i]);
        norm.agent_latency.update(interval.latency_by_agent[i]);
    }
    (global, per_agent)
}

/// One joint transition of all agents between consecutive decision rounds.
#[derive(Debug, Clone)]
pub struct Transition {
    pub window_s: Vec<Arc<Vec<f64>>>,
    pub window_next: Vec<Arc<Vec<f64>>>,
    pub agent_blocks: Vec<Vec<f64>>,
    pub agent_blocks_next: Vec<Vec<f64>>,
    pub masks: Vec<Option<ActionMask>>,
    pub masks_next: Vec<Option<ActionMask>>,
    /// Ego-indexed action per agent; `None` for agents without a decision.
    pub actions: Vec<Option<usize>>,
    pub rewards: Vec<f64>,
    pub reward_global: f64,
    pub done: bool,
}

/// A decision round: the decidable subtasks of this step with their masks,
/// plus the observation context shared by all agents.
#[derive(Debug, Clone)]
pub struct DecisionRound {
    pub time_ms: f64,
    pub decisions: Vec<Decision>,
    pub masks: Vec<ActionMask>,
    pub obs: Arc<Vec<f64>>,
    pub agent_blocks: Vec<Vec<f64>>,
}

#[derive(Debug)]
struct PendingRound {
    window_s: Vec<Arc<Vec<f64>>>,
    agent_blocks: Vec<Vec<f64>>,
    masks: Vec<Option<ActionMask>>,
    actions: Vec<Option<usize>>,
}

/// What `advance` produced: either the next decision round or completion.
#[derive(Debug)]
pub enum RoundEvent {
    Round(DecisionRound),
    Done,
}

/// The offloading environment: owns a simulation and exposes it as a
/// sequence of decision rounds.
pub struct OffloadEnv {
    pub sim: SimState,
    cfg: EnvConfig,
    normalizer: RewardNormalizer,
    obs_hist: Vec<Arc<Vec<f64>>>,
    pending: Option<PendingRound>,
    zero_obs: Arc<Vec<f64>>,
    rounds: u64,
}

impl OffloadEnv {
    pub fn new(sim: SimState, cfg: EnvConfig, normalizer: RewardNormalizer) -> Result<Self, SimError> {
        cfg.validate()?;
        let n_obs_devices = sim.device_count() - 1;
        let zero_obs = Arc::new(vec![0.0; cfg.obs_dim(n_obs_devices)]);
        Ok(OffloadEnv {
            sim,
            cfg,
            normalizer,
            obs_hist: Vec::new(),
            pending: None,
            zero_obs,
            rounds: 0,
        })
    }

    pub fn cfg(&self) -> &EnvConfig {
        &self.cfg
    }

    pub fn rounds(&self) -> u64 {
        self.rounds
    }

    pub fn n_agents(&self) -> usize {
        self.sim.n_agents()
    }

    /// Action-space size (n + m + 1).
    pub fn n_actions(&self) -> usize {
        self.sim.device_count()
    }

    /// Recover the normalizer to carry across episodes.
    pub fn into_normalizer(self) -> RewardNormalizer {
        self.normalizer
    }

    /// The last W observations, left-padded with zero slots.
    pub fn window(&self) -> Vec<Arc<Vec<f64>>> {
        let w = self.cfg.window;
        let mut out = Vec::with_capacity(w);
        let have = self.obs_hist.len().min(w);
        for _ in 0..w - have {
            out.push(Arc::clone(&self.zero_obs));
        }
        for obs in self.obs_hist.iter().skip(self.obs_hist.len() - have) {
            out.push(Arc::clone(obs));
        }
        out
    }

    fn agent_block(&self, agent: usize, decisions: &[Decision]) -> Vec<f64> {
        let mut block = vec![0.0; AGENT_BLOCK_WIDTH];
        if let Some(pos) = decisions.iter().position(|d| d.agent == agent) {
            let task = decisions[pos].task;
            let (c_in, c_out, cycles) = self.sim.task_data(task);
            let share = self.sim.channel_share_bps(agent);
            let pv = self
                .sim
                .queued_by_priority()
                .iter()
                .find(|(t, _)| *t == task)
                .map(|(_, pv)| *pv)
                .unwrap_or(0.0);
            block[0] = 1.0;
            block[1] = c_in / self.cfg.norm.max_data_bits;
            block[2] = share / self.cfg.norm.max_rate_bps;
            block[3] = cycles / self.cfg.norm.max_cycles;
            block[4] = c_out / self.cfg.norm.max_data_bits;
            block[5] = share / self.cfg.norm.max_rate_bps;
            block[6] = pv;
        }
        block[7] = self.sim.usage_now(agent);
        block
    }

    /// Advance the simulation to the next decision round (or completion).
    /// Returns the finalized transition of the previous round, when one was
    /// pending.
    pub fn advance(&mut self) -> Result<(RoundEvent, Option<Transition>), SimError> {
        loop {
            self.sim.boundary();
            if self.sim.done() {
                let transition = self.finalize_pending(true);
                return Ok((RoundEvent::Done, transition));
            }
            let decisions: Vec<Decision> = self
                .sim
                .decidable()
                .into_iter()
                .filter(|d| valid_actions(&self.sim, d.task).any_valid())
                .collect();
            if !decisions.is_empty() {
                let masks: Vec<ActionMask> = decisions
                    .iter()
                    .map(|d| valid_actions(&self.sim, d.task))
                    .collect();
                let obs = Arc::new(observe(&self.sim, &self.cfg).data);
                self.obs_hist.push(Arc::clone(&obs));
                let agent_blocks: Vec<Vec<f64>> = (0..self.n_agents())
                    .map(|a| self.agent_block(a, &decisions))
                    .collect();
                // The first round resets the interval base; later rounds
                // close the pending transition against this round's state.
                let transition = if self.pending.is_some() {
                    self.finalize_pending(false)
                } else {
                    let _ = self.sim.take_interval();
                    None
                };
                let round = DecisionRound {
                    time_ms: self.sim.clock_ms(),
                    decisions,
                    masks,
                    obs,
                    agent_blocks,
                };
                self.rounds += 1;
                return Ok((RoundEvent::Round(round), transition));
            }
            if self.sim.steps_taken() >= self.sim.config().max_steps {
                return Err(SimError::StepLimit(self.sim.config().max_steps));
            }
            self.sim.integrate_step();
        }
    }

    fn finalize_pending(&mut self, terminal: bool) -> Option<Transition> {
        let pending = self.pending.take()?;
        let interval = self.sim.take_interval();
        let n_agents = self.n_agents();
        let (reward_global, rewards) = reward(&interval, &self.cfg, &mut self.normalizer, n_agents);

        let (window_next, agent_blocks_next, masks_next) = if terminal {
            let obs = Arc::new(observe(&self.sim, &self.cfg).data);
            self.obs_hist.push(obs);
            (
                self.window(),
                vec![vec![0.0; AGENT_BLOCK_WIDTH]; n_agents],
                vec![None; n_agents],
            )
        } else {
            // Called right after the new round's observation was pushed.
            let decisions: Vec<Decision> = self
                .sim
                .decidable()
                .into_iter()
                .filter(|d| valid_actions(&self.sim, d.task).any_valid())
                .collect();
            let masks: Vec<ActionMask> = decisions
                .iter()
                .map(|d| valid_actions(&self.sim, d.task))
                .collect();
            let blocks: Vec<Vec<f64>> = (0..n_agents)
                .map(|a| self.agent_block(a, &decisions))
                .collect();
            let mut mask_by_agent: Vec<Option<ActionMask>> = vec![None; n_agents];
            for (d, m) in decisions.iter().zip(masks) {
                mask_by_agent[d.agent] = Some(m);
            }
            (self.window(), blocks, mask_by_agent)
        };
        Some(Transition {
            window_s: pending.window_s,
            window_next,
            agent_blocks: pending.agent_blocks,
            agent_blocks_next,
            masks: pending.masks,
            masks_next,
            actions: pending.actions,
            rewards,
            reward_global,
            done: terminal,
        })
    }

    /// Apply one round of actions (parallel to `round.decisions`, ego
    /// indexed) and integrate one step past the boundary.
    pub fn act(&mut self, round: &DecisionRound, actions: &[usize]) -> Result<(), SimError> {
        assert_eq!(actions.len(), round.decisions.len(), "one action per decision");
        let n = self.sim.device_count();
        let n_agents = self.n_agents();
        let mut agent_actions: Vec<Option<usize>> = vec![None; n_agents];
        let mut agent_masks: Vec<Option<ActionMask>> = vec![None; n_agents];
        let resolved: Vec<AgentDecision> = round
            .decisions
            .iter()
            .zip(actions)
            .map(|(d, &a)| {
                agent_actions[d.agent] = Some(a);
                agent_masks[d.agent] =
                    Some(round.masks[round.decisions.iter().position(|x| x == d).unwrap()].clone());
                AgentDecision {
                    decision: *d,
                    action_device: ego_to_global(d.agent, a, n),
                }
            })
            .collect();
        self.sim.apply_actions(&resolved);
        self.pending = Some(PendingRound {
            window_s: self.window(),
            agent_blocks: round.agent_blocks.clone(),
            masks: agent_masks,
            actions: agent_actions,
        });
        self.sim.integrate_step();
        Ok(())
    }
}

/// A policy selects one ego-indexed action per decidable subtask.
pub trait Policy {
    fn name(&self) -> &'static str;
    fn begin_episode(&mut self) {}
    fn select_actions(&mut self, env: &OffloadEnv, round: &DecisionRound) -> Vec<usize>;
}

/// Everything a finished run exposes for reporting and verification.
pub struct RunOutput {
    pub report: MetricsReport,
    pub checkpoints: Vec<MetricsReport>,
    pub events: EventLog,
    pub trace: crate::metrics::ClusterTrace,
    pub accounting: crate::sim::RunAccounting,
    pub job_summaries: Vec<crate::sim::JobSummary>,
    pub placements: Vec<(String, u64)>,
    pub masked_emissions: u64,
    pub rounds: u64,
}

/// Device-id-to-profile map of a cluster config.
pub fn cluster_profiles(cfg: &ClusterConfig) -> BTreeMap<String, DeviceProfile> {
    let mut map = BTreeMap::new();
    for np in cfg.mobiles.iter().chain(cfg.edges.iter()) {
        map.insert(np.id.clone(), np.profile.clone());
    }
    map.insert(cfg.cloud.id.clone(), cfg.cloud.profile.clone());
    map
}

/// Run a policy over a workload to completion. Deterministic for fixed
/// policy state and inputs. The final report and the per-decade checkpoint
/// reports are recomputed from the closed event log by the metrics module.
pub fn run_policy(
    policy: &mut dyn Policy,
    jobs: &[DagJob],
    cluster: &ClusterConfig,
    env_cfg: &EnvConfig,
) -> Result<RunOutput, SimError> {
    let mut sim = SimState::init_cluster(cluster.clone(), &env_cfg.comparison)?;
    sim.load_jobs(jobs)?;
    let mut env = OffloadEnv::new(sim, env_cfg.clone(), RewardNormalizer::default())?;
    policy.begin_episode();
    loop {
        match env.advance()? {
            (RoundEvent::Done, _) => break,
            (RoundEvent::Round(round), _) => {
                let actions = policy.select_actions(&env, &round);
                env.act(&round, &actions)?;
            }
        }
    }
    let rounds = env.rounds();
    let mut sim = env.sim;
    sim.finalize_events();

    let profiles = cluster_profiles(cluster);
    let submit_times = sim.job_submit_times();
    let end_ms = sim.clock_ms();
    let report = report_from_run(
        sim.events(),
        sim.trace(),
        &profiles,
        &submit_times,
        &env_cfg.load_weights,
        end_ms,
    )?;

    // Checkpoints every ten completed jobs: evaluate all metrics over the
    // prefix window ending at the decade's completion time.
    let mut completions: Vec<f64> = sim
        .job_summaries()
        .iter()
        .map(|j| j.completion_ms)
        .collect();
    completions.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    let mut checkpoints = Vec::new();
    let mut k = 10;
    while k <= completions.len() {
        let t_k = completions[k - 1];
        checkpoints.push(report_from_run(
            sim.events(),
            sim.trace(),
            &profiles,
            &submit_times,
            &env_cfg.load_weights,
            t_k,
        )?);
        k += 10;
    }

    let placements = (0..sim.device_count())
        .map(|d| (sim.device_id(d).to_string(), sim.accounting().placements[d]))
        .collect();
    Ok(RunOutput {
        report,
        checkpoints,
        masked_emissions: sim.masked_emissions(),
        job_summaries: sim.job_summaries(),
        placements,
        rounds,
        accounting: sim.accounting().clone(),
        trace: sim.trace().clone(),
        events: sim.events().clone(),
    })
}

/// Count of decidable-but-unplaced work; used by tests.
pub fn queued_task_count(sim: &SimState) -> usize {
    sim.queued_by_priority().len()
}

/// Expose the task phase enum for integration tests.
pub fn task_phase(sim: &SimState, task: usize) -> TaskPhase {
    sim.task_phase(task)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::{DeviceKind, DeviceProfile};
    use crate::workload::{DagJob, Subtask};

    fn profile(kind: DeviceKind, cap: f64, proc: f64) -> DeviceProfile {
        DeviceProfile {
            kind,
            p_full_watts: 10.0,
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

    /// Mobile capacity 1e8, edge 3e8, cloud 2e8 (cloud still fastest by
    /// proc rate).
    fn small_cluster() -> ClusterConfig {
        ClusterConfig::symmetric(
            1,
            1,
            1,
            profile(DeviceKind::Mobile, 1e8, 1e9),
            profile(DeviceKind::Edge, 3e8, 2e9),
            profile(DeviceKind::Cloud, 2e8, 4e9),
            1.0,
        )
    }

    fn one_task_job(req_rate: f64, pinned: bool) -> DagJob {
        DagJob {
            job_id: "j1".into(),
            origin_device: "mobile0".into(),
            submit_time_ms: 0.0,
            subtasks: vec![Subtask {
                id: "t0".into(),
                job_id: "j1".into(),
                deps: vec![],
                data_in_bits: 1e5,
                data_out_bits: 1e4,
                cpu_cycles: req_rate, // 1 s deadline: req rate == cycles
                deadline_ms: 1000.0,
                pinned_local: pinned,
            }],
        }
    }

    fn queued_sim(req_rate: f64, pinned: bool) -> SimState {
        let mut sim =
            SimState::init_cluster(small_cluster(), &ComparisonMatrix::default_factors()).unwrap();
        sim.load_jobs(&[one_task_job(req_rate, pinned)]).unwrap();
        sim.boundary();
        sim
    }

    #[test]
    fn ego_mapping_round_trips() {
        let n = 5;
        for agent in 0..n {
            for action in 0..n {
                let g = ego_to_global(agent, action, n).unwrap();
                assert_eq!(global_to_ego(agent, g), action);
            }
            assert_eq!(ego_to_global(agent, 0, n), Some(agent));
        }
    }

    #[test]
    fn mask_follows_resource_comparison_with_equality_admitting() {
        // Requirement 2e8 against available (1e8, 3e8, 2e8): mask (0,1,1);
        // the cloud is admitted at equality.
        let sim = queued_sim(2e8, false);
        let mask = valid_actions(&sim, 0);
        assert_eq!(mask.valid, vec![0, 1, 1]);
    }

    #[test]
    fn pinned_task_masks_everything_but_origin() {
        let sim = queued_sim(2e8, true);
        let mask = valid_actions(&sim, 0);
        assert_eq!(mask.valid, vec![1, 0, 0]);
    }

    #[test]
    fn saturated_cluster_masks_everything() {
        let sim = queued_sim(9e8, false);
        let mask = valid_actions(&sim, 0);
        assert_eq!(mask.valid, vec![0, 0, 0]);
        assert!(!mask.any_valid());
    }

    #[test]
    fn reward_kernel_matches_hand_values() {
        let w = RewardWeights::default();
        assert_eq!(reward_from_z(0.0, 0.0, 0.0, 0.0, &w), 0.0);
        let alpha_only = RewardWeights {
            alpha: 1.0,
            beta: 0.0,
            gamma: 0.0,
        };
        assert!((reward_from_z(1.0, 0.0, 0.0, 0.0, &alpha_only) + 1.0).abs() < 1e-12);
        // Even weights, z = (1, 0.5, -0.5) with the latency term already
        // including the priority pressure.
        let r = reward_from_z(1.0, 0.5, 0.0, -0.5, &w);
        assert!((r + 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn td_target_examples() {
        assert_eq!(td_target(1.0, 0.9, 5.0, true), 1.0);
        assert_eq!(td_target(1.0, 0.0, 5.0, false), 1.0);
        assert!((td_target(1.0, 0.9, 2.0, false) - 2.8).abs() < 1e-12);
    }

    #[test]
    fn empty_observation_is_all_padding() {
        let sim =
            SimState::init_cluster(small_cluster(), &ComparisonMatrix::default_factors()).unwrap();
        let cfg = EnvConfig::default();
        let obs = observe(&sim, &cfg);
        assert_eq!(obs.n_rows, 0);
        assert_eq!(obs.data.len(), cfg.obs_dim(sim.device_count() - 1));
        assert_eq!(obs.data[0], 1.0);
        // Every pending row is zero, including its validity flag.
        for r in 0..cfg.max_pending {
            let row = &obs.data[1 + r * OBS_ROW_WIDTH..1 + (r + 1) * OBS_ROW_WIDTH];
            assert!(row.iter().all(|&x| x == 0.0));
        }
    }

    #[test]
    fn single_pending_row_matches_task_fields() {
        let sim = queued_sim(2e8, false);
        let cfg = EnvConfig::default();
        let obs = observe(&sim, &cfg);
        assert_eq!(obs.n_rows, 1);
        let row = &obs.data[1..1 + OBS_ROW_WIDTH];
        assert!((row[0] - 1e5 / cfg.norm.max_data_bits).abs() < 1e-12);
        assert!((row[2] - 2e8 / cfg.norm.max_cycles).abs() < 1e-12);
        assert_eq!(row[6], 1.0);
        // Usage entries match the engine's instantaneous usage.
        let n_obs = sim.device_count() - 1;
        let v_off = 1 + cfg.max_pending * OBS_ROW_WIDTH + n_obs;
        for d in 0..n_obs {
            assert_eq!(obs.data[v_off + d], sim.usage_now(d));
        }
    }

    #[test]
    fn reward_ranking_survives_energy_unit_rescaling() {
        // Warm two normalizers on the same stream expressed in different
        // units; the immediate-reward ranking over candidate actions must
        // agree once each accumulator has seen its own stream.
        let cfg = EnvConfig::default();
        let scale = 3600.0; // joules vs watt-hours, say
        let mk = |energy: f64| IntervalAccum {
            start_ms: 0.0,
            end_ms: 1.0,
            energy_j: energy,
            energy_by_agent: vec![energy],
            latency_ms_sum: 0.0,
            latency_by_agent: vec![0.0],
            tardiness: 0.0,
            tardiness_by_agent: vec![0.0],
            cpu_time_s: vec![0.0; 3],
            mem_time_s: vec![0.0; 3],
            penalties: vec![0.0],
            finished_subtasks: 0,
        };
        let stream = [5.0, 2.0, 9.0, 4.0, 7.0, 1.0, 6.0, 3.0];
        let mut norm_a = RewardNormalizer::default();
        let mut norm_b = RewardNormalizer::default();
        for &x in &stream {
            reward(&mk(x), &cfg, &mut norm_a, 1);
            reward(&mk(x * scale), &cfg, &mut norm_b, 1);
        }
        let candidates = [2.5, 8.0, 4.5, 6.5];
        let score = |x: f64, norm: &RewardNormalizer| {
            reward_from_z(norm.energy.z(x), 0.0, 0.0, 0.0, &cfg.weights)
        };
        let best_a = candidates
            .iter()
            .enumerate()
            .max_by(|x, y| score(*x.1, &norm_a).partial_cmp(&score(*y.1, &norm_a)).unwrap())
            .unwrap()
            .0;
        let best_b = candidates
            .iter()
            .enumerate()
            .max_by(|x, y| {
                score(x.1 * scale, &norm_b)
                    .partial_cmp(&score(y.1 * scale, &norm_b))
                    .unwrap()
            })
            .unwrap()
            .0;
        assert_eq!(best_a, best_b);
        // The standardized values themselves agree to rounding.
        for &c in &candidates {
            assert!((norm_a.energy.z(c) - norm_b.energy.z(c * scale)).abs() < 1e-9);
        }
    }

    #[test]
    fn full_reward_pipeline_standardizes_and_penalizes() {
        let cfg = EnvConfig::default();
        let mut norm = RewardNormalizer::default();
        let mk = |energy: f64, penalty: f64| IntervalAccum {
            start_ms: 0.0,
            end_ms: 1.0,
            energy_j: energy,
            energy_by_agent: vec![energy],
            latency_ms_sum: 0.0,
            latency_by_agent: vec![0.0],
            tardiness: 0.0,
            tardiness_by_agent: vec![0.0],
            cpu_time_s: vec![0.0; 3],
            mem_time_s: vec![0.0; 3],
            penalties: vec![penalty],
            finished_subtasks: 0,
        };
        // First samples: all z-scores zero, no penalty: reward is zero.
        let (r, per) = reward(&mk(5.0, 0.0), &cfg, &mut norm, 1);
        assert_eq!(r, 0.0);
        assert_eq!(per, vec![0.0]);
        // A penalty flag subtracts directly.
        let (r, per) = reward(&mk(5.0, 1.0), &cfg, &mut norm, 1);
        assert!((r + cfg.invalid_action_penalty).abs() < 1e-12);
        assert!((per[0] + cfg.invalid_action_penalty).abs() < 1e-12);
        // Once spread exists, higher-than-mean energy is punished.
        reward(&mk(1.0, 0.0), &cfg, &mut norm, 1);
        let (r, _) = reward(&mk(50.0, 0.0), &cfg, &mut norm, 1);
        assert!(r < 0.0);
    }
}
