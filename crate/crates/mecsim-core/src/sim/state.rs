use std::collections::{HashMap, HashSet, VecDeque};

use crate::metrics::{transmission_rate, ClusterTrace, DeviceKind, DeviceProfile, DeviceTrace};
use crate::priority::{factor_weights, ComparisonMatrix, TaskFactors};
use crate::workload::{validate_dag, DagJob};

use super::config::{ClusterConfig, SimError};
use super::event::{EventKind, EventLog, SimEvent};
use super::queue::MessageQueue;

/// Lifecycle phase of one subtask inside the engine.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TaskPhase {
    NotSubmitted,
    WaitingDeps,
    Queued,
    /// Pinned task waiting for admission on its origin device.
    LocalPending,
    AwaitingUploads,
    Downloading,
    Executing,
    Done,
}

#[derive(Debug)]
pub(crate) struct TaskState {
    pub job: usize,
    pub key: String,
    pub origin: usize,
    pub pinned: bool,
    pub factors: TaskFactors,
    pub data_in_bits: f64,
    pub data_out_bits: f64,
    pub cpu_cycles: f64,
    pub deadline_ms: f64,
    pub req_cpu: f64,
    pub req_mem: f64,
    pub deps: Vec<usize>,
    pub dependents: Vec<usize>,
    pub remaining_deps: usize,
    pub phase: TaskPhase,
    pub placement: Option<usize>,
    pub pv: f64,
    pub x_dow: bool,
    pub uploaded: bool,
    pub upload_inflight: bool,
    /// Remote predecessors whose result uploads this task still awaits.
    pub awaiting_uploads: Vec<usize>,
    pub remaining_cycles: f64,
    pub exec_start_ms: f64,
    pub exec_end_ms: f64,
    pub trans_ms: f64,
    pub comp_ms: f64,
}

#[derive(Debug)]
struct JobState {
    spec: DagJob,
    first_task: usize,
    n_tasks: usize,
    submitted: bool,
    done_tasks: usize,
    completion_ms: f64,
}

#[derive(Debug)]
struct DeviceState {
    id: String,
    kind: DeviceKind,
    profile: DeviceProfile,
    reserved_cpu: f64,
    reserved_mem: f64,
    /// Number of placed-but-unfinished tasks holding reservations.
    resident: usize,
    executing: Vec<usize>,
    local_fifo: VecDeque<usize>,
}

#[derive(Debug)]
struct Transfer {
    task: usize,
    is_upload: bool,
    device: usize,
    total_bits: f64,
    remaining_bits: f64,
    start_ms: f64,
}

/// Whole-run incremental accounting, maintained step by step alongside the
/// event log so the two can be cross-checked.
#[derive(Debug, Clone)]
pub struct RunAccounting {
    pub compute_energy_j: Vec<f64>,
    pub trans_energy_j: Vec<f64>,
    /// Exact transferred bits (sum of completed transfer volumes).
    pub bits_transferred: f64,
    /// Step-accumulated transferred bits (should match within rounding).
    pub bits_step_sum: f64,
    /// Exact executed cycles (sum of completed task demands).
    pub cycles_demand_done: f64,
    /// Step-accumulated executed cycles.
    pub cycles_step_sum: f64,
    pub exec_counts: Vec<u64>,
    /// Per-device count of decided (non-pinned) placements.
    pub placements: Vec<u64>,
}

impl RunAccounting {
    fn new(n_devices: usize) -> Self {
        RunAccounting {
            compute_energy_j: vec![0.0; n_devices],
            trans_energy_j: vec![0.0; n_devices],
            bits_transferred: 0.0,
            bits_step_sum: 0.0,
            cycles_demand_done: 0.0,
            cycles_step_sum: 0.0,
            exec_counts: vec![0; n_devices],
            placements: vec![0; n_devices],
        }
    }

    pub fn total_energy_j(&self) -> f64 {
        self.compute_energy_j.iter().sum::<f64>() + self.trans_energy_j.iter().sum::<f64>()
    }
}

/// Metrics accumulated since the last decision round, feeding the reward.
#[derive(Debug, Clone)]
pub struct IntervalAccum {
    pub start_ms: f64,
    pub end_ms: f64,
    pub energy_j: f64,
    pub energy_by_agent: Vec<f64>,
    pub latency_ms_sum: f64,
    pub latency_by_agent: Vec<f64>,
    /// Priority-weighted normalized tardiness of subtasks finishing in the
    /// interval.
    pub tardiness: f64,
    pub tardiness_by_agent: Vec<f64>,
    pub cpu_time_s: Vec<f64>,
    pub mem_time_s: Vec<f64>,
    pub penalties: Vec<f64>,
    pub finished_subtasks: u64,
}

impl IntervalAccum {
    fn new(n_agents: usize, n_devices: usize, start_ms: f64) -> Self {
        IntervalAccum {
            start_ms,
            end_ms: start_ms,
            energy_j: 0.0,
            energy_by_agent: vec![0.0; n_agents],
            latency_ms_sum: 0.0,
            latency_by_agent: vec![0.0; n_agents],
            tardiness: 0.0,
            tardiness_by_agent: vec![0.0; n_agents],
            cpu_time_s: vec![0.0; n_devices],
            mem_time_s: vec![0.0; n_devices],
            penalties: vec![0.0; n_agents],
            finished_subtasks: 0,
        }
    }
}

/// A decidable subtask: queue-head work of one agent this round.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Decision {
    pub agent: usize,
    pub task: usize,
}

/// The resolved action for one decision: a global device index, or `None`
/// to defer the task one step.
#[derive(Debug, Clone, Copy)]
pub struct AgentDecision {
    pub decision: Decision,
    pub action_device: Option<usize>,
}

/// Summary of a finished job.
#[derive(Debug, Clone, PartialEq)]
pub struct JobSummary {
    pub job_id: String,
    pub origin: String,
    pub submit_ms: f64,
    pub completion_ms: f64,
    pub makespan_ms: f64,
}

pub struct SimState {
    cfg: ClusterConfig,
    lambda: [f64; 3],
    devices: Vec<DeviceState>,
    queues: Vec<MessageQueue>,
    jobs: Vec<JobState>,
    pub(crate) tasks: Vec<TaskState>,
    submit_order: Vec<usize>,
    clock_ms: f64,
    steps_taken: u64,
    events: EventLog,
    trace: ClusterTrace,
    transfers: Vec<Transfer>,
    finished_uploads: Vec<usize>,
    finished_downloads: Vec<usize>,
    finished_execs: Vec<(usize, f64)>,
    acc: RunAccounting,
    interval: IntervalAccum,
    masked_emissions: u64,
    submitted_jobs: usize,
    completed_jobs: usize,
}

impl SimState {
    /// Build an idle cluster. The comparison matrix fixes the AHP factor
    /// weights used by the region queues.
    pub fn init_cluster(
        cfg: ClusterConfig,
        comparison: &ComparisonMatrix,
    ) -> Result<Self, SimError> {
        cfg.validate()?;
        let lambda = factor_weights(comparison);
        let mut devices = Vec::with_capacity(cfg.device_count());
        for np in cfg.mobiles.iter().chain(cfg.edges.iter()) {
            devices.push(DeviceState {
                id: np.id.clone(),
                kind: np.profile.kind,
                profile: np.profile.clone(),
                reserved_cpu: 0.0,
                reserved_mem: 0.0,
                resident: 0,
                executing: Vec::new(),
                local_fifo: VecDeque::new(),
            });
        }
        devices.push(DeviceState {
            id: cfg.cloud.id.clone(),
            kind: DeviceKind::Cloud,
            profile: cfg.cloud.profile.clone(),
            reserved_cpu: 0.0,
            reserved_mem: 0.0,
            resident: 0,
            executing: Vec::new(),
            local_fifo: VecDeque::new(),
        });
        let queues = (0..cfg.regions.len()).map(MessageQueue::new).collect();
        let trace = ClusterTrace {
            start_ms: 0.0,
            step_ms: cfg.step_ms,
            devices: devices
                .iter()
                .map(|d| DeviceTrace {
                    device: d.id.clone(),
                    cpu: Vec::new(),
                    mem: Vec::new(),
                    bits_up: Vec::new(),
                    bits_down: Vec::new(),
                    tx_active_s: Vec::new(),
                })
                .collect(),
        };
        let n_devices = devices.len();
        let n_agents = cfg.n_mobile();
        Ok(SimState {
            cfg,
            lambda,
            devices,
            queues,
            jobs: Vec::new(),
            tasks: Vec::new(),
            submit_order: Vec::new(),
            clock_ms: 0.0,
            steps_taken: 0,
            events: EventLog::default(),
            trace,
            transfers: Vec::new(),
            finished_uploads: Vec::new(),
            finished_downloads: Vec::new(),
            finished_execs: Vec::new(),
            acc: RunAccounting::new(n_devices),
            interval: IntervalAccum::new(n_agents, n_devices, 0.0),
            masked_emissions: 0,
            submitted_jobs: 0,
            completed_jobs: 0,
        })
    }

    /// Register jobs for submission at their submit times. Jobs must pass
    /// DAG validation and originate from a known mobile device.
    pub fn load_jobs(&mut self, jobs: &[DagJob]) -> Result<(), SimError> {
        for job in jobs {
            validate_dag(job).map_err(|e| SimError::Config(e.to_string()))?;
            if self.jobs.iter().any(|j| j.spec.job_id == job.job_id) {
                return Err(SimError::Config(format!("duplicate job id {}", job.job_id)));
            }
            let origin = self
                .device_index(&job.origin_device)
                .ok_or_else(|| {
                    SimError::UnknownOrigin(job.job_id.clone(), job.origin_device.clone())
                })?;
            if self.devices[origin].kind != DeviceKind::Mobile {
                return Err(SimError::Config(format!(
                    "job {} must originate from a mobile device",
                    job.job_id
                )));
            }
            let first_task = self.tasks.len();
            let job_idx = self.jobs.len();
            let index_of: HashMap<&str, usize> = job
                .subtasks
                .iter()
                .enumerate()
                .map(|(i, s)| (s.id.as_str(), first_task + i))
                .collect();
            for sub in &job.subtasks {
                let deps: Vec<usize> = sub.deps.iter().map(|d| index_of[d.as_str()]).collect();
                let req_cpu = sub.cpu_cycles / (sub.deadline_ms / 1000.0);
                let req_mem = (sub.data_in_bits + sub.data_out_bits) / 8.0;
                self.tasks.push(TaskState {
                    job: job_idx,
                    key: format!("{}/{}", job.job_id, sub.id),
                    origin,
                    pinned: sub.pinned_local,
                    factors: TaskFactors::from(sub),
                    data_in_bits: sub.data_in_bits,
                    data_out_bits: sub.data_out_bits,
                    cpu_cycles: sub.cpu_cycles,
                    deadline_ms: sub.deadline_ms,
                    req_cpu,
                    req_mem,
                    deps,
                    dependents: Vec::new(),
                    remaining_deps: sub.deps.len(),
                    phase: TaskPhase::NotSubmitted,
                    placement: None,
                    pv: 1.0 / job.subtasks.len() as f64,
                    x_dow: false,
                    uploaded: false,
                    upload_inflight: false,
                    awaiting_uploads: Vec::new(),
                    remaining_cycles: sub.cpu_cycles,
                    exec_start_ms: f64::NAN,
                    exec_end_ms: f64::NAN,
                    trans_ms: 0.0,
                    comp_ms: 0.0,
                });
            }
            for t in first_task..self.tasks.len() {
                for d in self.tasks[t].deps.clone() {
                    self.tasks[d].dependents.push(t);
                }
            }
            self.jobs.push(JobState {
                spec: job.clone(),
                first_task,
                n_tasks: job.subtasks.len(),
                submitted: false,
                done_tasks: 0,
                completion_ms: f64::NAN,
            });
        }
        self.submit_order = (0..self.jobs.len()).collect();
        self.submit_order.sort_by(|&a, &b| {
            self.jobs[a]
                .spec
                .submit_time_ms
                .partial_cmp(&self.jobs[b].spec.submit_time_ms)
                .unwrap_or(std::cmp::Ordering::Equal)
                .then_with(|| self.jobs[a].spec.job_id.cmp(&self.jobs[b].spec.job_id))
        });
        Ok(())
    }

    pub fn clock_ms(&self) -> f64 {
        self.clock_ms
    }

    pub fn step_ms(&self) -> f64 {
        self.cfg.step_ms
    }

    pub fn steps_taken(&self) -> u64 {
        self.steps_taken
    }

    pub fn config(&self) -> &ClusterConfig {
        &self.cfg
    }

    pub fn device_count(&self) -> usize {
        self.devices.len()
    }

    pub fn n_agents(&self) -> usize {
        self.cfg.n_mobile()
    }

    pub fn device_id(&self, idx: usize) -> &str {
        &self.devices[idx].id
    }

    pub fn device_kind(&self, idx: usize) -> DeviceKind {
        self.devices[idx].kind
    }

    pub fn device_profile(&self, idx: usize) -> &DeviceProfile {
        &self.devices[idx].profile
    }

    pub fn device_index(&self, id: &str) -> Option<usize> {
        self.devices.iter().position(|d| d.id == id)
    }

    pub fn masked_emissions(&self) -> u64 {
        self.masked_emissions
    }

    pub fn done(&self) -> bool {
        self.submitted_jobs == self.jobs.len() && self.completed_jobs == self.jobs.len()
    }

    pub fn completed_jobs(&self) -> usize {
        self.completed_jobs
    }

    pub fn events(&self) -> &EventLog {
        &self.events
    }

    pub fn trace(&self) -> &ClusterTrace {
        &self.trace
    }

    pub fn accounting(&self) -> &RunAccounting {
        &self.acc
    }

    /// Available admission capacity of a device.
    pub fn available(&self, device: usize) -> (f64, f64) {
        let d = &self.devices[device];
        (
            d.profile.cpu_capacity_cycles_per_s - d.reserved_cpu,
            d.profile.mem_bytes - d.reserved_mem,
        )
    }

    /// Resource requirement of a task: the cycle rate needed to meet its
    /// deadline and the bytes held by its input plus output buffers.
    pub fn requirements(&self, task: usize) -> (f64, f64) {
        (self.tasks[task].req_cpu, self.tasks[task].req_mem)
    }

    /// Alg-1 feasibility: required resources must not exceed available ones
    /// (equality admits).
    pub fn fits(&self, task: usize, device: usize) -> bool {
        let (req_cpu, req_mem) = self.requirements(task);
        let (av_cpu, av_mem) = self.available(device);
        req_cpu <= av_cpu && req_mem <= av_mem
    }

    /// Instantaneous CPU usage of a device: each executing task uses the
    /// lesser of its demanded rate and its processor-sharing slice, so the
    /// total is structurally within [0, 1].
    pub fn usage_now(&self, device: usize) -> f64 {
        let d = &self.devices[device];
        if d.executing.is_empty() {
            return 0.0;
        }
        let proc = d.profile.proc_rate_cycles_per_s;
        let share = proc / d.executing.len() as f64;
        let raw: f64 = d
            .executing
            .iter()
            .map(|&t| self.tasks[t].req_cpu.min(share) / proc)
            .sum();
        raw.min(1.0)
    }

    /// Instantaneous memory usage fraction of a device, clamped to [0, 1].
    pub fn mem_usage_now(&self, device: usize) -> f64 {
        let d = &self.devices[device];
        (d.reserved_mem / d.profile.mem_bytes).min(1.0)
    }

    /// Current per-transfer channel share of a device in bits per second.
    pub fn channel_share_bps(&self, device: usize) -> f64 {
        let d = &self.devices[device];
        let rate = transmission_rate(d.profile.tx_power_watts, &d.profile);
        let active = self.transfers.iter().filter(|t| t.device == device).count();
        rate / active.max(1) as f64
    }

    pub fn task_phase(&self, task: usize) -> TaskPhase {
        self.tasks[task].phase
    }

    pub fn task_key(&self, task: usize) -> &str {
        &self.tasks[task].key
    }

    pub fn task_origin(&self, task: usize) -> usize {
        self.tasks[task].origin
    }

    pub fn task_pinned(&self, task: usize) -> bool {
        self.tasks[task].pinned
    }

    pub fn task_factors(&self, task: usize) -> TaskFactors {
        self.tasks[task].factors
    }

    pub fn task_data(&self, task: usize) -> (f64, f64, f64) {
        let t = &self.tasks[task];
        (t.data_in_bits, t.data_out_bits, t.cpu_cycles)
    }

    /// All queued entries across regions ordered by priority descending
    /// (ties per the queue comparator), as (task, pv).
    pub fn queued_by_priority(&self) -> Vec<(usize, f64)> {
        let mut all: Vec<(usize, f64, f64, &str)> = Vec::new();
        for q in &self.queues {
            for e in q.entries() {
                all.push((e.task, e.pv, e.submit_ms, e.sort_key.as_str()));
            }
        }
        all.sort_by(|a, b| {
            crate::priority::queue_order((a.1, a.2, a.3), (b.1, b.2, b.3))
        });
        all.into_iter().map(|(t, pv, _, _)| (t, pv)).collect()
    }

    /// Boundary bookkeeping: apply completions from the last step, submit
    /// due jobs (at most one request per device per step) and admit pinned
    /// tasks. Call once per step before decisions.
    pub fn boundary(&mut self) {
        let now = self.clock_ms;

        // Execution completions: wake dependents, book latency and
        // tardiness, close jobs.
        let finished = std::mem::take(&mut self.finished_execs);
        for (task, end_ms) in finished {
            let (job_idx, agent, latency, tardiness) = {
                let t = &self.tasks[task];
                let submit_nominal = self.jobs[t.job].spec.submit_time_ms;
                let tardy =
                    t.pv * ((end_ms - submit_nominal - t.deadline_ms) / t.deadline_ms).max(0.0);
                (t.job, t.origin, t.trans_ms + t.comp_ms, tardy)
            };
            self.interval.latency_ms_sum += latency;
            self.interval.tardiness += tardiness;
            self.interval.finished_subtasks += 1;
            if agent < self.cfg.n_mobile() {
                self.interval.latency_by_agent[agent] += latency;
                self.interval.tardiness_by_agent[agent] += tardiness;
            }
            for dep in self.tasks[task].dependents.clone() {
                self.tasks[dep].remaining_deps -= 1;
                if self.tasks[dep].remaining_deps == 0
                    && self.tasks[dep].phase == TaskPhase::WaitingDeps
                {
                    self.make_ready(dep, now);
                }
            }
            let job = &mut self.jobs[job_idx];
            job.done_tasks += 1;
            if job.completion_ms.is_nan() || end_ms > job.completion_ms {
                job.completion_ms = end_ms;
            }
            if job.done_tasks == job.n_tasks {
                self.completed_jobs += 1;
            }
        }

        // Upload completions enable waiting consumers.
        let uploads = std::mem::take(&mut self.finished_uploads);
        for producer in uploads {
            self.tasks[producer].uploaded = true;
            self.tasks[producer].upload_inflight = false;
            for consumer in self.tasks[producer].dependents.clone() {
                let waiting = &mut self.tasks[consumer].awaiting_uploads;
                if let Some(pos) = waiting.iter().position(|&p| p == producer) {
                    waiting.remove(pos);
                    if waiting.is_empty() && self.tasks[consumer].phase == TaskPhase::AwaitingUploads
                    {
                        self.after_uploads(consumer, now);
                    }
                }
            }
        }

        // Download completions start execution.
        let downloads = std::mem::take(&mut self.finished_downloads);
        for consumer in downloads {
            self.start_exec(consumer, now);
        }

        // Job submissions, one offloading request per origin device per
        // step; later jobs from the same device retry next step.
        let mut used_origin: HashSet<usize> = HashSet::new();
        let order = self.submit_order.clone();
        for job_idx in order {
            if self.jobs[job_idx].submitted {
                continue;
            }
            if self.jobs[job_idx].spec.submit_time_ms > now + 1e-9 {
                continue;
            }
            let origin = self.tasks[self.jobs[job_idx].first_task].origin;
            if !used_origin.insert(origin) {
                continue;
            }
            self.jobs[job_idx].submitted = true;
            self.submitted_jobs += 1;
            let first = self.jobs[job_idx].first_task;
            let n = self.jobs[job_idx].n_tasks;
            for task in first..first + n {
                let (key, device, cycles) = {
                    let t = &self.tasks[task];
                    (t.key.clone(), self.devices[t.origin].id.clone(), t.cpu_cycles)
                };
                self.events.push(SimEvent {
                    time_ms: now,
                    kind: EventKind::Submit,
                    subtask: key,
                    device,
                    quantity: cycles,
                });
                if self.tasks[task].remaining_deps == 0 {
                    self.make_ready(task, now);
                } else {
                    self.tasks[task].phase = TaskPhase::WaitingDeps;
                }
            }
        }

        // Pinned admissions in device order, FIFO per device. A task whose
        // demand exceeds the whole capacity is admitted alone once the
        // device is empty.
        for d in 0..self.devices.len() {
            loop {
                let Some(&head) = self.devices[d].local_fifo.front() else {
                    break;
                };
                let fits = self.fits(head, d);
                let dev = &self.devices[d];
                // A pinned task larger than the whole device is admitted
                // alone once the device has emptied.
                let oversub_solo = !fits
                    && dev.resident == 0
                    && (self.tasks[head].req_cpu > dev.profile.cpu_capacity_cycles_per_s
                        || self.tasks[head].req_mem > dev.profile.mem_bytes);
                if fits || oversub_solo {
                    self.devices[d].local_fifo.pop_front();
                    self.place_task(head, d, now);
                } else {
                    break;
                }
            }
        }
    }

    /// Mark a task ready: pinned tasks join the origin's local FIFO (the
    /// boundary admission pass runs after all readiness updates), others
    /// enter their region's priority queue.
    fn make_ready(&mut self, task: usize, _now: f64) {
        let t = &self.tasks[task];
        if t.pinned {
            let origin = t.origin;
            self.tasks[task].phase = TaskPhase::LocalPending;
            self.devices[origin].local_fifo.push_back(task);
        } else {
            let region = self.cfg.mobile_regions[t.origin];
            let submit_ms = self.jobs[t.job].spec.submit_time_ms;
            let (factors, key) = (t.factors, t.key.clone());
            self.tasks[task].phase = TaskPhase::Queued;
            self.queues[region].enqueue(task, factors, submit_ms, key, self.lambda);
        }
    }

    /// The decidable set of this round: for each region queue in priority
    /// order, the first entry of every agent that has no earlier entry,
    /// at most one per agent.
    pub fn decidable(&self) -> Vec<Decision> {
        let mut claimed: HashSet<usize> = HashSet::new();
        let mut out = Vec::new();
        for q in &self.queues {
            for e in q.entries() {
                let agent = self.tasks[e.task].origin;
                if claimed.insert(agent) {
                    out.push(Decision {
                        agent,
                        task: e.task,
                    });
                }
            }
        }
        out.sort_by_key(|d| d.agent);
        out
    }

    /// Apply one round of actions. Invalid (masked) actions are counted,
    /// penalized and leave the task queued for the next step.
    pub fn apply_actions(&mut self, actions: &[AgentDecision]) {
        let now = self.clock_ms;
        for ad in actions {
            let task = ad.decision.task;
            if self.tasks[task].phase != TaskPhase::Queued {
                continue;
            }
            let Some(device) = ad.action_device else {
                continue; // defer
            };
            if device >= self.devices.len() || !self.fits(task, device) {
                self.masked_emissions += 1;
                let agent = ad.decision.agent;
                if agent < self.interval.penalties.len() {
                    self.interval.penalties[agent] += 1.0;
                }
                continue;
            }
            let region = self.cfg.mobile_regions[self.tasks[task].origin];
            if let Some(entry) = self.queues[region].remove(task) {
                self.tasks[task].pv = entry.pv;
            }
            self.acc.placements[device] += 1;
            self.place_task(task, device, now);
        }
    }

    /// Reserve resources and start the transfer chain (or execution) of a
    /// placed task.
    fn place_task(&mut self, task: usize, device: usize, now: f64) {
        {
            let (req_cpu, req_mem) = self.requirements(task);
            let dev = &mut self.devices[device];
            dev.reserved_cpu += req_cpu;
            dev.reserved_mem += req_mem;
            dev.resident += 1;
        }
        self.tasks[task].placement = Some(device);
        let deps = self.tasks[task].deps.clone();
        let mut remote_preds: Vec<usize> = deps
            .into_iter()
            .filter(|&p| self.tasks[p].placement != Some(device))
            .collect();
        remote_preds.sort_unstable();
        remote_preds.dedup();
        self.tasks[task].x_dow = !remote_preds.is_empty();
        let mut awaiting = Vec::new();
        for p in remote_preds {
            if self.tasks[p].uploaded {
                continue;
            }
            if !self.tasks[p].upload_inflight {
                if self.tasks[p].data_out_bits <= 0.0 {
                    self.tasks[p].uploaded = true;
                    continue;
                }
                self.spawn_transfer(p, true, now);
            }
            awaiting.push(p);
        }
        let waiting = !awaiting.is_empty();
        self.tasks[task].awaiting_uploads = awaiting;
        if waiting {
            self.tasks[task].phase = TaskPhase::AwaitingUploads;
        } else {
            self.after_uploads(task, now);
        }
    }

    fn after_uploads(&mut self, task: usize, now: f64) {
        if self.tasks[task].x_dow && self.tasks[task].data_in_bits > 0.0 {
            self.spawn_transfer(task, false, now);
            self.tasks[task].phase = TaskPhase::Downloading;
        } else {
            self.start_exec(task, now);
        }
    }

    fn spawn_transfer(&mut self, task: usize, is_upload: bool, now: f64) {
        let t = &self.tasks[task];
        let device = if is_upload {
            t.placement.expect("producer placed")
        } else {
            t.placement.expect("consumer placed")
        };
        let bits = if is_upload {
            t.data_out_bits
        } else {
            t.data_in_bits
        };
        debug_assert!(bits > 0.0);
        self.events.push(SimEvent {
            time_ms: now,
            kind: EventKind::TransferStart,
            subtask: t.key.clone(),
            device: self.devices[device].id.clone(),
            quantity: bits,
        });
        if is_upload {
            self.tasks[task].upload_inflight = true;
        }
        self.transfers.push(Transfer {
            task,
            is_upload,
            device,
            total_bits: bits,
            remaining_bits: bits,
            start_ms: now,
        });
    }

    fn start_exec(&mut self, task: usize, now: f64) {
        let device = self.tasks[task].placement.expect("task placed");
        self.tasks[task].phase = TaskPhase::Executing;
        self.tasks[task].exec_start_ms = now;
        self.devices[device].executing.push(task);
        self.events.push(SimEvent {
            time_ms: now,
            kind: EventKind::ExecStart,
            subtask: self.tasks[task].key.clone(),
            device: self.devices[device].id.clone(),
            quantity: self.tasks[task].cpu_cycles,
        });
    }

    /// Advance physics by one step: progress transfers at the shared
    /// channel rate and executions at the shared processing rate, with
    /// exact mid-step completion times. Rates are frozen at step start.
    pub fn integrate_step(&mut self) {
        let t0 = self.clock_ms;
        let dt_ms = self.cfg.step_ms;
        let dt_s = dt_ms / 1000.0;
        let n_devices = self.devices.len();
        let n_agents = self.n_agents();

        // Memory usage is constant within a step (reservations change only
        // at boundaries).
        let mem_sample: Vec<f64> = (0..n_devices).map(|d| self.mem_usage_now(d)).collect();

        // Executions.
        let mut cpu_raw = vec![0.0; n_devices]; // usage-seconds, unclamped
        let mut cpu_raw_by_task: Vec<(usize, usize, f64)> = Vec::new(); // device, task, raw share
        for d in 0..n_devices {
            let running = self.devices[d].executing.clone();
            if running.is_empty() {
                continue;
            }
            let proc = self.devices[d].profile.proc_rate_cycles_per_s;
            let share = proc / running.len() as f64;
            let mut finished_here: Vec<usize> = Vec::new();
            for task in running {
                let remaining = self.tasks[task].remaining_cycles;
                let can = share * dt_s;
                let (credited, dur_s, finished) = if remaining <= can {
                    (remaining, remaining / share, true)
                } else {
                    (can, dt_s, false)
                };
                self.acc.cycles_step_sum += credited;
                let u = self.tasks[task].req_cpu.min(share) / proc;
                cpu_raw[d] += u * dur_s;
                cpu_raw_by_task.push((d, task, u * dur_s));
                if finished {
                    let end_ms = t0 + dur_s * 1000.0;
                    self.tasks[task].remaining_cycles = 0.0;
                    self.tasks[task].exec_end_ms = end_ms;
                    self.tasks[task].comp_ms = end_ms - self.tasks[task].exec_start_ms;
                    self.tasks[task].phase = TaskPhase::Done;
                    self.acc.cycles_demand_done += self.tasks[task].cpu_cycles;
                    self.acc.exec_counts[d] += 1;
                    self.events.push(SimEvent {
                        time_ms: end_ms,
                        kind: EventKind::ExecEnd,
                        subtask: self.tasks[task].key.clone(),
                        device: self.devices[d].id.clone(),
                        quantity: self.tasks[task].cpu_cycles,
                    });
                    // Release reservations immediately; dependents wake at
                    // the next boundary. Snapping to zero on an empty
                    // device keeps float residue out of the admission test.
                    let (req_cpu, req_mem) = self.requirements(task);
                    let dev = &mut self.devices[d];
                    dev.resident -= 1;
                    if dev.resident == 0 {
                        dev.reserved_cpu = 0.0;
                        dev.reserved_mem = 0.0;
                    } else {
                        dev.reserved_cpu = (dev.reserved_cpu - req_cpu).max(0.0);
                        dev.reserved_mem = (dev.reserved_mem - req_mem).max(0.0);
                    }
                    finished_here.push(task);
                    self.finished_execs.push((task, end_ms));
                } else {
                    self.tasks[task].remaining_cycles = remaining - credited;
                }
            }
            self.devices[d]
                .executing
                .retain(|t| !finished_here.contains(t));
        }

        // Energy from executions, clamping device usage at one (demand can
        // exceed capacity only through solo oversubscribed admissions).
        let mut cpu_bounded = vec![0.0; n_devices];
        for d in 0..n_devices {
            cpu_bounded[d] = cpu_raw[d].min(dt_s);
        }
        for (d, task, raw) in cpu_raw_by_task {
            if raw <= 0.0 {
                continue;
            }
            let scale = if cpu_raw[d] > 0.0 {
                cpu_bounded[d] / cpu_raw[d]
            } else {
                0.0
            };
            let p = &self.devices[d].profile;
            let energy = p.k_ratio * p.p_full_watts * raw * scale;
            self.acc.compute_energy_j[d] += energy;
            self.interval.energy_j += energy;
            let agent = self.tasks[task].origin;
            if agent < n_agents {
                self.interval.energy_by_agent[agent] += energy;
            }
        }

        // Transfers: the channel of a device is shared equally among its
        // active transfers; rates are frozen for the step.
        let mut active_count = vec![0usize; n_devices];
        for tr in &self.transfers {
            active_count[tr.device] += 1;
        }
        let mut bits_up = vec![0.0f64; n_devices];
        let mut bits_down = vec![0.0f64; n_devices];
        let mut tx_span_s = vec![0.0f64; n_devices];
        let mut finished_transfers: Vec<usize> = Vec::new();
        for (i, tr) in self.transfers.iter_mut().enumerate() {
            let d = tr.device;
            let profile = &self.devices[d].profile;
            let rate = transmission_rate(profile.tx_power_watts, profile)
                / active_count[d].max(1) as f64;
            let can = rate * dt_s;
            let (moved, span_s, finished) = if tr.remaining_bits <= can {
                (tr.remaining_bits, tr.remaining_bits / rate, true)
            } else {
                (can, dt_s, false)
            };
            self.acc.bits_step_sum += moved;
            if tr.is_upload {
                bits_up[d] += moved;
            } else {
                bits_down[d] += moved;
            }
            tx_span_s[d] = tx_span_s[d].max(span_s);
            if finished {
                let end_ms = t0 + span_s * 1000.0;
                tr.remaining_bits = 0.0;
                self.acc.bits_transferred += tr.total_bits;
                self.events.push(SimEvent {
                    time_ms: end_ms,
                    kind: EventKind::TransferEnd,
                    subtask: self.tasks[tr.task].key.clone(),
                    device: self.devices[d].id.clone(),
                    quantity: tr.total_bits,
                });
                let leg_ms = end_ms - tr.start_ms;
                self.tasks[tr.task].trans_ms += leg_ms;
                if tr.is_upload {
                    // The producer already finished executing; book its
                    // upload latency into the current interval.
                    self.interval.latency_ms_sum += leg_ms;
                    let agent = self.tasks[tr.task].origin;
                    if agent < n_agents {
                        self.interval.latency_by_agent[agent] += leg_ms;
                    }
                    self.finished_uploads.push(tr.task);
                } else {
                    self.finished_downloads.push(tr.task);
                }
                finished_transfers.push(i);
            } else {
                tr.remaining_bits -= moved;
            }
        }
        for i in finished_transfers.into_iter().rev() {
            self.transfers.remove(i);
        }

        // Transmission energy of mobile devices: transmit power times the
        // transmitting span (all active spans start at step start, so the
        // union is the maximum span).
        for d in 0..n_devices {
            if self.devices[d].kind == DeviceKind::Mobile && tx_span_s[d] > 0.0 {
                let e = self.devices[d].profile.tx_power_watts * tx_span_s[d];
                self.acc.trans_energy_j[d] += e;
                self.interval.energy_j += e;
                if d < n_agents {
                    self.interval.energy_by_agent[d] += e;
                }
            }
        }

        // Trace samples and interval load integrals.
        for d in 0..n_devices {
            let cpu_avg = cpu_bounded[d] / dt_s;
            let tr = &mut self.trace.devices[d];
            tr.cpu.push(cpu_avg);
            tr.mem.push(mem_sample[d]);
            tr.bits_up.push(bits_up[d]);
            tr.bits_down.push(bits_down[d]);
            tr.tx_active_s.push(tx_span_s[d]);
            self.interval.cpu_time_s[d] += cpu_bounded[d];
            self.interval.mem_time_s[d] += mem_sample[d] * dt_s;
        }

        self.clock_ms = t0 + dt_ms;
        self.steps_taken += 1;
        self.interval.end_ms = self.clock_ms;
    }

    /// Hand the accumulated interval metrics to the caller and start a new
    /// interval at the current clock.
    pub fn take_interval(&mut self) -> IntervalAccum {
        let fresh = IntervalAccum::new(self.n_agents(), self.devices.len(), self.clock_ms);
        std::mem::replace(&mut self.interval, fresh)
    }

    /// Per-job summaries for completed jobs.
    pub fn job_summaries(&self) -> Vec<JobSummary> {
        self.jobs
            .iter()
            .filter(|j| j.done_tasks == j.n_tasks)
            .map(|j| JobSummary {
                job_id: j.spec.job_id.clone(),
                origin: j.spec.origin_device.clone(),
                submit_ms: j.spec.submit_time_ms,
                completion_ms: j.completion_ms,
                makespan_ms: j.completion_ms - j.spec.submit_time_ms,
            })
            .collect()
    }

    /// Nominal submit time per job id (for post-hoc report computation).
    pub fn job_submit_times(&self) -> Vec<(String, f64)> {
        self.jobs
            .iter()
            .map(|j| (j.spec.job_id.clone(), j.spec.submit_time_ms))
            .collect()
    }

    /// Sort the event log by time (stable within equal times) for export.
    pub fn finalize_events(&mut self) {
        fn rank(kind: EventKind) -> u8 {
            match kind {
                EventKind::Submit => 0,
                EventKind::TransferStart => 1,
                EventKind::TransferEnd => 2,
                EventKind::ExecStart => 3,
                EventKind::ExecEnd => 4,
            }
        }
        self.events.events.sort_by(|a, b| {
            a.time_ms
                .partial_cmp(&b.time_ms)
                .unwrap_or(std::cmp::Ordering::Equal)
                .then_with(|| rank(a.kind).cmp(&rank(b.kind)))
                .then_with(|| a.subtask.cmp(&b.subtask))
        });
    }
}
