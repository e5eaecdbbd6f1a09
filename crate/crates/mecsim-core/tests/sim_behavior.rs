//! Engine behavior: lifecycle ordering, sharing, submission pacing,
//! determinism and conservation.

use mecsim_core::env::{
    ego_to_global, run_policy, valid_actions, DecisionRound, EnvConfig, OffloadEnv, Policy,
};
use mecsim_core::metrics::{self, DeviceKind, DeviceProfile};
use mecsim_core::priority::ComparisonMatrix;
use mecsim_core::sim::{ClusterConfig, EventKind, SimState, TaskPhase};
use mecsim_core::workload::{self, DagJob, Subtask, WorkloadConfig};

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

fn cluster(n: usize, m: usize, regions: usize) -> ClusterConfig {
    // Mobile admission capacity covers any realistic concurrent demand so
    // the local policy never has to spill.
    ClusterConfig::symmetric(
        n,
        m,
        regions,
        profile(DeviceKind::Mobile, 1e11, 1e9),
        profile(DeviceKind::Edge, 4e9, 4e9),
        profile(DeviceKind::Cloud, 1.6e10, 1.6e10),
        1.0,
    )
}

fn subtask(job: &str, id: &str, deps: &[&str], cycles: f64, pinned: bool) -> Subtask {
    Subtask {
        id: id.into(),
        job_id: job.into(),
        deps: deps.iter().map(|d| d.to_string()).collect(),
        data_in_bits: 2e5,
        data_out_bits: 1e5,
        cpu_cycles: cycles,
        deadline_ms: 1000.0,
        pinned_local: pinned,
    }
}

struct LocalTestPolicy;
impl Policy for LocalTestPolicy {
    fn name(&self) -> &'static str {
        "local-test"
    }
    fn select_actions(&mut self, _env: &OffloadEnv, round: &DecisionRound) -> Vec<usize> {
        round
            .masks
            .iter()
            .map(|m| if m.is_valid(0) { 0 } else { m.first_valid().unwrap() })
            .collect()
    }
}

/// Offload everything to the first valid non-local device; fall back local.
struct OffloadTestPolicy;
impl Policy for OffloadTestPolicy {
    fn name(&self) -> &'static str {
        "offload-test"
    }
    fn select_actions(&mut self, _env: &OffloadEnv, round: &DecisionRound) -> Vec<usize> {
        round
            .masks
            .iter()
            .map(|m| {
                (1..m.len())
                    .find(|&a| m.is_valid(a))
                    .unwrap_or_else(|| m.first_valid().unwrap())
            })
            .collect()
    }
}

#[test]
fn cluster_counts_and_region_split() {
    let c = cluster(1, 1, 1);
    assert_eq!(c.device_count(), 3);
    let paper_scale = cluster(10, 80, 10);
    assert_eq!(paper_scale.regions.len(), 10);
    for region in &paper_scale.regions {
        assert_eq!(region.len(), 8);
    }
}

#[test]
fn duplicate_device_id_is_rejected() {
    let mut c = cluster(2, 1, 1);
    c.mobiles[1].id = "mobile0".into();
    assert!(c.validate().is_err());
}

#[test]
fn one_step_local_task_finishes_in_one_step() {
    // Exactly one step of cycles at the mobile's rate: 1e9 * 1 ms = 1e6.
    let job = DagJob {
        job_id: "j".into(),
        origin_device: "mobile0".into(),
        submit_time_ms: 0.0,
        subtasks: vec![subtask("j", "t0", &[], 1e6, true)],
    };
    let mut policy = LocalTestPolicy;
    let out = run_policy(&mut policy, &[job], &cluster(1, 1, 1), &EnvConfig::default()).unwrap();
    assert_eq!(out.job_summaries.len(), 1);
    assert!((out.job_summaries[0].makespan_ms - 1.0).abs() < 1e-9);
}

#[test]
fn offloaded_task_transfers_before_executing() {
    // Entry (pinned) feeds an interior task that the policy offloads.
    let job = DagJob {
        job_id: "j".into(),
        origin_device: "mobile0".into(),
        submit_time_ms: 0.0,
        subtasks: vec![
            subtask("j", "t0", &[], 1e6, true),
            subtask("j", "t1", &["t0"], 1e7, false),
            subtask("j", "t2", &["t1"], 1e6, true),
        ],
    };
    let mut policy = OffloadTestPolicy;
    let out = run_policy(&mut policy, &[job], &cluster(1, 1, 1), &EnvConfig::default()).unwrap();
    let events: Vec<_> = out
        .events
        .iter()
        .filter(|e| e.subtask == "j/t1")
        .collect();
    let t_end = events
        .iter()
        .find(|e| e.kind == EventKind::TransferEnd)
        .expect("offloaded task downloads its input");
    let x_start = events
        .iter()
        .find(|e| e.kind == EventKind::ExecStart)
        .unwrap();
    assert!(t_end.time_ms <= x_start.time_ms);
    // Lifecycle order per subtask: submit first, execution start before
    // end, input downloads before execution (result uploads may follow the
    // producer's completion).
    for key in ["j/t0", "j/t1", "j/t2"] {
        let times: Vec<(f64, EventKind)> = out
            .events
            .iter()
            .filter(|e| e.subtask == key)
            .map(|e| (e.time_ms, e.kind))
            .collect();
        for w in times.windows(2) {
            assert!(w[0].0 <= w[1].0, "events sorted for {key}");
        }
        assert_eq!(times.first().unwrap().1, EventKind::Submit);
        let at = |kind: EventKind| times.iter().find(|(_, k)| *k == kind).map(|(t, _)| *t);
        let start = at(EventKind::ExecStart).unwrap();
        let end = at(EventKind::ExecEnd).unwrap();
        assert!(start <= end);
        assert!(at(EventKind::Submit).unwrap() <= start);
    }
}

#[test]
fn equal_share_doubles_solo_time() {
    // Two one-task jobs from different agents, both forced onto edge0.
    struct ToEdge;
    impl Policy for ToEdge {
        fn name(&self) -> &'static str {
            "to-edge"
        }
        fn select_actions(&mut self, env: &OffloadEnv, round: &DecisionRound) -> Vec<usize> {
            let n = env.n_actions();
            round
                .decisions
                .iter()
                .map(|d| {
                    // Global index of edge0 is n_mobile; ego-map it.
                    let edge0 = env.sim.device_index("edge0").unwrap();
                    (0..n)
                        .find(|&a| ego_to_global(d.agent, a, n) == Some(edge0))
                        .unwrap()
                })
                .collect()
        }
    }
    let mk_job = |id: &str, origin: &str| DagJob {
        job_id: id.into(),
        origin_device: origin.into(),
        submit_time_ms: 0.0,
        subtasks: vec![subtask(id, "t0", &[], 2e7, false)],
    };
    let c = cluster(2, 1, 1);
    let solo = run_policy(
        &mut ToEdge,
        &[mk_job("a", "mobile0")],
        &c,
        &EnvConfig::default(),
    )
    .unwrap();
    let dual = run_policy(
        &mut ToEdge,
        &[mk_job("a", "mobile0"), mk_job("b", "mobile1")],
        &c,
        &EnvConfig::default(),
    )
    .unwrap();
    let solo_exec = solo.report.makespan_ms["a"];
    let dual_exec_a = dual.report.makespan_ms["a"];
    let dual_exec_b = dual.report.makespan_ms["b"];
    // Identical transfer time in both runs; execution doubles from 5 to 10
    // ms. Compare completed makespans: dual is solo + 5 ms of slowdown.
    assert!((dual_exec_a - dual_exec_b).abs() < 1e-9);
    assert!((dual_exec_a - solo_exec - 5.0).abs() < 1e-6);
}

#[test]
fn fig2_only_entry_runs_at_submit() {
    let jobs = {
        let edges: &[(&str, &[&str])] = &[
            ("s1", &[]),
            ("s2", &["s1"]),
            ("s3", &["s1"]),
            ("s4", &["s1"]),
            ("s5", &["s2", "s3"]),
            ("s6", &["s3", "s4"]),
            ("s7", &["s5", "s6"]),
        ];
        let mut job = DagJob {
            job_id: "fig2".into(),
            origin_device: "mobile0".into(),
            submit_time_ms: 0.0,
            subtasks: edges
                .iter()
                .map(|(id, deps)| subtask("fig2", id, deps, 5e6, false))
                .collect(),
        };
        workload::mark_pinned(&mut job);
        job
    };
    let mut sim = SimState::init_cluster(cluster(1, 2, 1), &ComparisonMatrix::default_factors())
        .unwrap();
    sim.load_jobs(&[jobs]).unwrap();
    sim.boundary();
    // s1 (task 0) is pinned and starts locally; everything else waits.
    assert_eq!(sim.task_phase(0), TaskPhase::Executing);
    for t in 1..7 {
        assert_eq!(sim.task_phase(t), TaskPhase::WaitingDeps);
    }
    // Run until s1 completes; s2..s4 become queued, s5..s7 still waiting.
    for _ in 0..10 {
        sim.integrate_step();
        sim.boundary();
        if sim.task_phase(0) == TaskPhase::Done {
            break;
        }
    }
    assert_eq!(sim.task_phase(0), TaskPhase::Done);
    for t in 1..4 {
        assert_eq!(sim.task_phase(t), TaskPhase::Queued, "s{} queued", t + 1);
    }
    for t in 4..7 {
        assert_eq!(sim.task_phase(t), TaskPhase::WaitingDeps);
    }
}

#[test]
fn queue_pops_highest_priority_first() {
    // Two tasks from one agent: the tighter deadline must be decided first.
    let job = |id: &str, deadline: f64| DagJob {
        job_id: id.into(),
        origin_device: "mobile0".into(),
        submit_time_ms: 0.0,
        subtasks: vec![Subtask {
            id: "t0".into(),
            job_id: id.into(),
            deps: vec![],
            data_in_bits: 1e5,
            data_out_bits: 1e5,
            cpu_cycles: 1e7,
            deadline_ms: deadline,
            pinned_local: false,
        }],
    };
    let mut sim = SimState::init_cluster(cluster(2, 1, 1), &ComparisonMatrix::default_factors())
        .unwrap();
    // Different jobs to dodge the one-request rule: both from mobile0 means
    // the second submits a step later; use a long horizon instead.
    sim.load_jobs(&[job("a", 500.0), job("b", 50.0)]).unwrap();
    sim.boundary();
    sim.integrate_step();
    sim.boundary();
    // Both queued now; head of the decidable set for agent 0 is job b.
    let decisions = sim.decidable();
    assert_eq!(decisions.len(), 1);
    assert_eq!(sim.task_key(decisions[0].task), "b/t0");
}

#[test]
fn second_request_same_device_waits_one_step() {
    let job = |id: &str| DagJob {
        job_id: id.into(),
        origin_device: "mobile0".into(),
        submit_time_ms: 0.0,
        subtasks: vec![subtask(id, "t0", &[], 1e6, true)],
    };
    let mut sim = SimState::init_cluster(cluster(1, 1, 1), &ComparisonMatrix::default_factors())
        .unwrap();
    sim.load_jobs(&[job("a"), job("b")]).unwrap();
    sim.boundary();
    let submits: Vec<f64> = sim
        .events()
        .iter()
        .filter(|e| e.kind == EventKind::Submit)
        .map(|e| e.time_ms)
        .collect();
    assert_eq!(submits, vec![0.0]);
    sim.integrate_step();
    sim.boundary();
    let submits: Vec<(f64, String)> = sim
        .events()
        .iter()
        .filter(|e| e.kind == EventKind::Submit)
        .map(|e| (e.time_ms, e.subtask.clone()))
        .collect();
    assert_eq!(submits.len(), 2);
    assert_eq!(submits[1], (1.0, "b/t0".to_string()));
}

#[test]
fn local_policy_moves_no_bits() {
    let wl = workload::generate_synthetic(&WorkloadConfig {
        n_jobs: 12,
        n_origin_devices: 2,
        seed: 3,
        ..WorkloadConfig::default()
    })
    .unwrap();
    let out = run_policy(&mut LocalTestPolicy, &wl, &cluster(2, 2, 1), &EnvConfig::default())
        .unwrap();
    assert_eq!(out.accounting.bits_transferred, 0.0);
    assert_eq!(out.report.network_usage, 0.0);
    assert_eq!(out.masked_emissions, 0);
}

#[test]
fn runs_are_deterministic_and_conservative() {
    let wl = workload::generate_synthetic(&WorkloadConfig {
        n_jobs: 20,
        n_origin_devices: 3,
        seed: 11,
        ..WorkloadConfig::default()
    })
    .unwrap();
    let c = cluster(3, 4, 2);
    let a = run_policy(&mut OffloadTestPolicy, &wl, &c, &EnvConfig::default()).unwrap();
    let b = run_policy(&mut OffloadTestPolicy, &wl, &c, &EnvConfig::default()).unwrap();
    assert_eq!(a.events.to_csv(), b.events.to_csv());
    assert_eq!(a.report, b.report);

    // Conservation: event volumes match the metrics recomputation and the
    // step-level accumulation; executed cycles equal completed demand.
    let event_bits: f64 = a
        .events
        .iter()
        .filter(|e| e.kind == EventKind::TransferEnd)
        .map(|e| e.quantity)
        .sum();
    assert_eq!(event_bits, a.accounting.bits_transferred);
    let trace_bits =
        metrics::transferred_bits(&a.trace, 0.0, a.trace.end_ms()).unwrap();
    assert!((trace_bits - event_bits).abs() <= 1e-9 * event_bits.max(1.0));

    // Exact conservation: the executed-cycles multiset equals the demand
    // multiset (sorted sums are bitwise equal).
    let mut demand: Vec<f64> = wl
        .iter()
        .flat_map(|j| j.subtasks.iter().map(|s| s.cpu_cycles))
        .collect();
    let mut executed: Vec<f64> = a
        .events
        .iter()
        .filter(|e| e.kind == EventKind::ExecEnd)
        .map(|e| e.quantity)
        .collect();
    demand.sort_by(|x, y| x.partial_cmp(y).unwrap());
    executed.sort_by(|x, y| x.partial_cmp(y).unwrap());
    assert_eq!(demand, executed);
    let total: f64 = demand.iter().sum();
    assert!(
        (a.accounting.cycles_step_sum - total).abs() <= 1e-9 * total,
        "step-sum {} vs demand {}",
        a.accounting.cycles_step_sum,
        total
    );
    assert!((a.accounting.cycles_demand_done - total).abs() <= 1e-9 * total);
    assert_eq!(a.masked_emissions, 0);

    // Usage stays within bounds at every step.
    for dev in &a.trace.devices {
        for &u in &dev.cpu {
            assert!((0.0..=1.0 + 1e-12).contains(&u));
        }
    }

    // Service times count every executed subtask.
    let st_total: u64 = a.report.service_times.values().sum();
    let n_subtasks: usize = wl.iter().map(|j| j.subtasks.len()).sum();
    assert_eq!(st_total as usize, n_subtasks);
}

#[test]
fn invalid_action_is_rejected_and_requeued() {
    let job = DagJob {
        job_id: "j".into(),
        origin_device: "mobile0".into(),
        submit_time_ms: 0.0,
        subtasks: vec![subtask("j", "t0", &[], 9e8, false)],
    };
    // Mobile capacity too small for the requirement (9e8 cycles / 1 s with
    // capacity 1e9 fits; shrink the deadline instead).
    let mut job = job;
    job.subtasks[0].deadline_ms = 100.0; // needs 9e9: too big for the edge
    let mut sim = SimState::init_cluster(cluster(1, 1, 1), &ComparisonMatrix::default_factors())
        .unwrap();
    sim.load_jobs(&[job]).unwrap();
    sim.boundary();
    let decisions = sim.decidable();
    assert_eq!(decisions.len(), 1);
    let mask = valid_actions(&sim, decisions[0].task);
    assert_eq!(mask.valid, vec![1, 0, 1]); // the edge (4e9) cannot host it
    // Force the masked edge placement: the engine counts and re-queues.
    let edge0 = sim.device_index("edge0").unwrap();
    sim.apply_actions(&[mecsim_core::sim::AgentDecision {
        decision: decisions[0],
        action_device: Some(edge0),
    }]);
    assert_eq!(sim.masked_emissions(), 1);
    assert_eq!(sim.task_phase(decisions[0].task), TaskPhase::Queued);
}
