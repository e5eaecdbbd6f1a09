//! Workload ingestion: trace-file parsing, synthetic generation and DAG
//! validation.
//!
//! Trace files are UTF-8 JSON lines, one subtask per line:
//! `{job_id, task_id, deps, cpu_cycles, data_in_bits, data_out_bits,
//! deadline_ms, submit_time_ms, origin_device}`. Records of one job may be
//! interleaved with other jobs; they are grouped on ingest.

use std::collections::{HashMap, HashSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum WorkloadError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("job {job}: task {task} depends on unknown task {missing}")]
    DanglingDep {
        job: String,
        task: String,
        missing: String,
    },
    #[error("job {job}: dependency cycle among tasks {members:?}")]
    Cycle { job: String, members: Vec<String> },
    #[error("job {job}: {msg}")]
    InvalidJob { job: String, msg: String },
    #[error("invalid workload config: {0}")]
    Config(String),
}

/// One unit of schedulable work inside a job.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Subtask {
    pub id: String,
    pub job_id: String,
    /// Ids of subtasks (same job) whose results this subtask consumes.
    pub deps: Vec<String>,
    pub data_in_bits: f64,
    pub data_out_bits: f64,
    pub cpu_cycles: f64,
    pub deadline_ms: f64,
    /// Entry/exit subtasks must run on the originating device.
    pub pinned_local: bool,
}

impl Subtask {
    fn check_fields(&self) -> Result<(), WorkloadError> {
        let bad = |msg: String| WorkloadError::InvalidJob {
            job: self.job_id.clone(),
            msg,
        };
        if !(self.data_in_bits >= 0.0) || !(self.data_out_bits >= 0.0) {
            return Err(bad(format!("task {}: negative data size", self.id)));
        }
        if !(self.cpu_cycles > 0.0) {
            return Err(bad(format!("task {}: cpu_cycles must be positive", self.id)));
        }
        if !(self.deadline_ms > 0.0) {
            return Err(bad(format!("task {}: deadline_ms must be positive", self.id)));
        }
        Ok(())
    }
}

/// A job: a DAG of subtasks submitted from one mobile device.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DagJob {
    pub job_id: String,
    pub origin_device: String,
    pub submit_time_ms: f64,
    pub subtasks: Vec<Subtask>,
}

impl DagJob {
    pub fn subtask_index(&self, id: &str) -> Option<usize> {
        self.subtasks.iter().position(|s| s.id == id)
    }
}

/// Bounded uniform range, inclusive of both ends.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Range {
    pub lo: f64,
    pub hi: f64,
}

impl Range {
    pub fn new(lo: f64, hi: f64) -> Self {
        Range { lo, hi }
    }

    fn sample(&self, rng: &mut impl Rng) -> f64 {
        if self.hi > self.lo {
            rng.gen_range(self.lo..self.hi)
        } else {
            self.lo
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WorkloadConfig {
    pub n_jobs: usize,
    pub subtasks_min: usize,
    pub subtasks_max: usize,
    /// Probability of wiring an extra dependency between two interior
    /// subtasks. Zero produces fully independent subtasks.
    pub edge_density: f64,
    pub data_in_bits: Range,
    pub data_out_bits: Range,
    pub cpu_cycles: Range,
    pub deadline_ms: Range,
    /// Job submit times are drawn uniformly from [0, submit_window_ms).
    pub submit_window_ms: f64,
    /// Jobs originate round-robin from devices mobile0..mobile{n-1}.
    pub n_origin_devices: usize,
    pub seed: u64,
}

impl Default for WorkloadConfig {
    fn default() -> Self {
        WorkloadConfig {
            n_jobs: 100,
            subtasks_min: 3,
            subtasks_max: 5,
            edge_density: 0.3,
            data_in_bits: Range::new(5.0e4, 3.0e5),
            data_out_bits: Range::new(2.0e4, 1.5e5),
            cpu_cycles: Range::new(1.0e7, 1.0e8),
            deadline_ms: Range::new(80.0, 400.0),
            submit_window_ms: 600.0,
            n_origin_devices: 5,
            seed: 1,
        }
    }
}

impl WorkloadConfig {
    pub fn validate(&self) -> Result<(), WorkloadError> {
        let err = |msg: &str| Err(WorkloadError::Config(msg.to_string()));
        if self.n_jobs == 0 {
            return err("n_jobs must be positive");
        }
        if self.subtasks_min == 0 || self.subtasks_min > self.subtasks_max {
            return err("subtasks range must satisfy 1 <= min <= max");
        }
        if !(0.0..=1.0).contains(&self.edge_density) {
            return err("edge_density must be within [0, 1]");
        }
        for (name, r) in [
            ("data_in_bits", self.data_in_bits),
            ("data_out_bits", self.data_out_bits),
            ("cpu_cycles", self.cpu_cycles),
            ("deadline_ms", self.deadline_ms),
        ] {
            if !(r.lo <= r.hi) {
                return Err(WorkloadError::Config(format!("{name}: lo > hi")));
            }
            if !(r.lo >= 0.0) {
                return Err(WorkloadError::Config(format!("{name}: negative bound")));
            }
        }
        if !(self.cpu_cycles.lo > 0.0) || !(self.deadline_ms.lo > 0.0) {
            return err("cpu_cycles and deadline_ms must be strictly positive");
        }
        if self.submit_window_ms < 0.0 {
            return err("submit_window_ms must be non-negative");
        }
        if self.n_origin_devices == 0 {
            return err("n_origin_devices must be positive");
        }
        Ok(())
    }
}

/// Wire format for one trace line.
#[derive(Debug, Serialize, Deserialize)]
struct TraceRecord {
    job_id: String,
    task_id: String,
    deps: Vec<String>,
    cpu_cycles: f64,
    data_in_bits: f64,
    data_out_bits: f64,
    deadline_ms: f64,
    submit_time_ms: f64,
    origin_device: String,
}

/// Parse a trace file into validated jobs. Records belonging to one job are
/// grouped regardless of interleaving; job order follows first appearance.
pub fn parse_trace(text: &str) -> Result<Vec<DagJob>, WorkloadError> {
    let mut order: Vec<String> = Vec::new();
    let mut jobs: HashMap<String, DagJob> = HashMap::new();

    for (i, line) in text.lines().enumerate() {
        let lineno = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let rec: TraceRecord =
            serde_json::from_str(line).map_err(|e| WorkloadError::Parse {
                line: lineno,
                msg: e.to_string(),
            })?;
        let job = jobs.entry(rec.job_id.clone()).or_insert_with(|| {
            order.push(rec.job_id.clone());
            DagJob {
                job_id: rec.job_id.clone(),
                origin_device: rec.origin_device.clone(),
                submit_time_ms: rec.submit_time_ms,
                subtasks: Vec::new(),
            }
        });
        if job.origin_device != rec.origin_device || job.submit_time_ms != rec.submit_time_ms {
            return Err(WorkloadError::Parse {
                line: lineno,
                msg: format!(
                    "job {} has inconsistent origin_device/submit_time_ms across records",
                    rec.job_id
                ),
            });
        }
        job.subtasks.push(Subtask {
            id: rec.task_id,
            job_id: rec.job_id,
            deps: rec.deps,
            data_in_bits: rec.data_in_bits,
            data_out_bits: rec.data_out_bits,
            cpu_cycles: rec.cpu_cycles,
            deadline_ms: rec.deadline_ms,
            pinned_local: false,
        });
    }

    let mut out = Vec::with_capacity(order.len());
    for id in order {
        let mut job = jobs.remove(&id).expect("job recorded in order list");
        mark_pinned(&mut job);
        validate_dag(&job)?;
        for s in &job.subtasks {
            s.check_fields()?;
        }
        out.push(job);
    }
    Ok(out)
}

/// Serialize jobs back to the JSON-lines trace format.
pub fn serialize_trace(jobs: &[DagJob]) -> String {
    let mut out = String::new();
    for job in jobs {
        for sub in &job.subtasks {
            let rec = TraceRecord {
                job_id: job.job_id.clone(),
                task_id: sub.id.clone(),
                deps: sub.deps.clone(),
                cpu_cycles: sub.cpu_cycles,
                data_in_bits: sub.data_in_bits,
                data_out_bits: sub.data_out_bits,
                deadline_ms: sub.deadline_ms,
                submit_time_ms: job.submit_time_ms,
                origin_device: job.origin_device.clone(),
            };
            out.push_str(&serde_json::to_string(&rec).expect("trace record serializes"));
            out.push('\n');
        }
    }
    out
}

/// Flag entry subtasks (no dependencies) and exit subtasks (no dependents)
/// as pinned to the originating device.
pub fn mark_pinned(job: &mut DagJob) {
    let mut has_dependent: HashSet<String> = HashSet::new();
    for s in &job.subtasks {
        for d in &s.deps {
            has_dependent.insert(d.clone());
        }
    }
    for s in &mut job.subtasks {
        s.pinned_local = s.deps.is_empty() || !has_dependent.contains(&s.id);
    }
}

/// Generate a deterministic synthetic workload. Jobs are anchored DAGs: the
/// first subtask is the sole entry and the last the sole exit whenever
/// `edge_density > 0`, matching the shape of partitioned mobile applications.
pub fn generate_synthetic(cfg: &WorkloadConfig) -> Result<Vec<DagJob>, WorkloadError> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut jobs = Vec::with_capacity(cfg.n_jobs);
    for j in 0..cfg.n_jobs {
        let job_id = format!("j{j:05}");
        let origin = format!("mobile{}", j % cfg.n_origin_devices);
        let submit = if cfg.submit_window_ms > 0.0 {
            rng.gen_range(0.0..cfg.submit_window_ms)
        } else {
            0.0
        };
        let k = rng.gen_range(cfg.subtasks_min..=cfg.subtasks_max);

        let mut deps: Vec<Vec<usize>> = vec![Vec::new(); k];
        if cfg.edge_density > 0.0 && k >= 2 {
            // Interior nodes sample dependencies among earlier interiors and
            // fall back to the entry node so every interior is reachable.
            for i in 1..k - 1 {
                for p in 1..i {
                    if rng.gen_bool(cfg.edge_density) {
                        deps[i].push(p);
                    }
                }
                if deps[i].is_empty() {
                    deps[i].push(0);
                }
            }
            // The exit node collects every sink so the job has one exit.
            let mut is_sink = vec![true; k - 1];
            for d in deps.iter().take(k - 1) {
                for &p in d {
                    is_sink[p] = false;
                }
            }
            deps[k - 1] = (0..k - 1).filter(|&p| is_sink[p]).collect();
        }

        let mut subtasks = Vec::with_capacity(k);
        for i in 0..k {
            let id = format!("t{i}");
            subtasks.push(Subtask {
                id,
                job_id: job_id.clone(),
                deps: deps[i].iter().map(|p| format!("t{p}")).collect(),
                data_in_bits: cfg.data_in_bits.sample(&mut rng),
                data_out_bits: cfg.data_out_bits.sample(&mut rng),
                cpu_cycles: cfg.cpu_cycles.sample(&mut rng),
                deadline_ms: cfg.deadline_ms.sample(&mut rng),
                pinned_local: false,
            });
        }
        let mut job = DagJob {
            job_id,
            origin_device: origin,
            submit_time_ms: submit,
            subtasks,
        };
        mark_pinned(&mut job);
        debug_assert!(validate_dag(&job).is_ok());
        jobs.push(job);
    }
    Ok(jobs)
}

/// Check uniqueness of ids, resolvability of dependencies and acyclicity.
/// On a cycle, the error lists the members of one concrete cycle.
pub fn validate_dag(job: &DagJob) -> Result<(), WorkloadError> {
    if job.subtasks.is_empty() {
        return Err(WorkloadError::InvalidJob {
            job: job.job_id.clone(),
            msg: "job has no subtasks".into(),
        });
    }
    let mut index: HashMap<&str, usize> = HashMap::new();
    for (i, s) in job.subtasks.iter().enumerate() {
        if index.insert(s.id.as_str(), i).is_some() {
            return Err(WorkloadError::InvalidJob {
                job: job.job_id.clone(),
                msg: format!("duplicate subtask id {}", s.id),
            });
        }
    }
    for s in &job.subtasks {
        for d in &s.deps {
            if !index.contains_key(d.as_str()) {
                return Err(WorkloadError::DanglingDep {
                    job: job.job_id.clone(),
                    task: s.id.clone(),
                    missing: d.clone(),
                });
            }
        }
    }
    match topological_order(job) {
        Some(_) => Ok(()),
        None => Err(WorkloadError::Cycle {
            job: job.job_id.clone(),
            members: find_cycle(job, &index),
        }),
    }
}

/// Kahn topological sort; `None` when the dependency relation has a cycle.
pub fn topological_order(job: &DagJob) -> Option<Vec<usize>> {
    let n = job.subtasks.len();
    let index: HashMap<&str, usize> = job
        .subtasks
        .iter()
        .enumerate()
        .map(|(i, s)| (s.id.as_str(), i))
        .collect();
    let mut indegree = vec![0usize; n];
    let mut dependents: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (i, s) in job.subtasks.iter().enumerate() {
        for d in &s.deps {
            let p = *index.get(d.as_str())?;
            indegree[i] += 1;
            dependents[p].push(i);
        }
    }
    let mut ready: Vec<usize> = (0..n).filter(|&i| indegree[i] == 0).collect();
    let mut order = Vec::with_capacity(n);
    while let Some(i) = ready.pop() {
        order.push(i);
        for &d in &dependents[i] {
            indegree[d] -= 1;
            if indegree[d] == 0 {
                ready.push(d);
            }
        }
    }
    if order.len() == n {
        Some(order)
    } else {
        None
    }
}

/// DFS cycle extraction over the dependency relation. Only called once a
/// cycle is known to exist; returns the member ids of one cycle, rotated to
/// start at the lexicographically smallest id for determinism.
fn find_cycle(job: &DagJob, index: &HashMap<&str, usize>) -> Vec<String> {
    #[derive(Clone, Copy, PartialEq)]
    enum Mark {
        White,
        Gray,
        Black,
    }
    let n = job.subtasks.len();
    let mut mark = vec![Mark::White; n];
    let mut stack: Vec<usize> = Vec::new();

    fn dfs(
        v: usize,
        job: &DagJob,
        index: &HashMap<&str, usize>,
        mark: &mut [Mark],
        stack: &mut Vec<usize>,
    ) -> Option<Vec<usize>> {
        mark[v] = Mark::Gray;
        stack.push(v);
        for d in &job.subtasks[v].deps {
            let u = index[d.as_str()];
            match mark[u] {
                Mark::Gray => {
                    let pos = stack.iter().position(|&x| x == u).expect("on stack");
                    return Some(stack[pos..].to_vec());
                }
                Mark::White => {
                    if let Some(c) = dfs(u, job, index, mark, stack) {
                        return Some(c);
                    }
                }
                Mark::Black => {}
            }
        }
        stack.pop();
        mark[v] = Mark::Black;
        None
    }

    for v in 0..n {
        if mark[v] == Mark::White {
            if let Some(cycle) = dfs(v, job, index, &mut mark, &mut stack) {
                let mut ids: Vec<String> =
                    cycle.iter().map(|&i| job.subtasks[i].id.clone()).collect();
                let min_pos = ids
                    .iter()
                    .enumerate()
                    .min_by(|a, b| a.1.cmp(b.1))
                    .map(|(i, _)| i)
                    .unwrap_or(0);
                ids.rotate_left(min_pos);
                return ids;
            }
        }
    }
    Vec::new()
}

/// Group jobs into consecutive blocks of `block_size` in submit-time order
/// (ties by job id). Used by the episode protocol and block reporting.
pub fn blocks_by_submit_order(jobs: &[DagJob], block_size: usize) -> Vec<Vec<DagJob>> {
    let mut sorted: Vec<&DagJob> = jobs.iter().collect();
    sorted.sort_by(|a, b| {
        a.submit_time_ms
            .partial_cmp(&b.submit_time_ms)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then_with(|| a.job_id.cmp(&b.job_id))
    });
    let mut blocks = Vec::new();
    for chunk in sorted.chunks(block_size.max(1)) {
        blocks.push(chunk.iter().map(|j| (*j).clone()).collect());
    }
    blocks
}

#[cfg(test)]
mod tests {
    use super::*;

    fn minimal_line() -> &'static str {
        r#"{"job_id":"j1","task_id":"t1","deps":[],"cpu_cycles":1e8,"data_in_bits":1e5,"data_out_bits":2e4,"deadline_ms":100.0,"submit_time_ms":0.0,"origin_device":"mobile0"}"#
    }

    #[test]
    fn parses_minimal_record() {
        let jobs = parse_trace(minimal_line()).unwrap();
        assert_eq!(jobs.len(), 1);
        assert_eq!(jobs[0].subtasks.len(), 1);
        assert!(jobs[0].subtasks[0].deps.is_empty());
        assert!(jobs[0].subtasks[0].pinned_local);
    }

    #[test]
    fn parses_single_edge_chain() {
        let text = format!(
            "{}\n{}\n",
            minimal_line(),
            r#"{"job_id":"j1","task_id":"t2","deps":["t1"],"cpu_cycles":1e8,"data_in_bits":1e5,"data_out_bits":2e4,"deadline_ms":100.0,"submit_time_ms":0.0,"origin_device":"mobile0"}"#
        );
        let jobs = parse_trace(&text).unwrap();
        assert_eq!(jobs[0].subtasks[1].deps, vec!["t1".to_string()]);
    }

    #[test]
    fn dangling_dep_names_missing_id() {
        let text = r#"{"job_id":"j1","task_id":"t1","deps":["t9"],"cpu_cycles":1e8,"data_in_bits":1e5,"data_out_bits":2e4,"deadline_ms":100.0,"submit_time_ms":0.0,"origin_device":"mobile0"}"#;
        let err = parse_trace(text).unwrap_err();
        match err {
            WorkloadError::DanglingDep { missing, .. } => assert_eq!(missing, "t9"),
            other => panic!("expected dangling dep, got {other:?}"),
        }
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let text = format!("{}\n{{not json}}\n", minimal_line());
        let err = parse_trace(&text).unwrap_err();
        match err {
            WorkloadError::Parse { line, .. } => assert_eq!(line, 2),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    fn fig2_job() -> DagJob {
        // Seven subtasks: s1 fans out to s2..s4, s5 joins s2+s3, s6 joins
        // s3+s4, s7 joins s5+s6.
        let edges: &[(&str, &[&str])] = &[
            ("s1", &[]),
            ("s2", &["s1"]),
            ("s3", &["s1"]),
            ("s4", &["s1"]),
            ("s5", &["s2", "s3"]),
            ("s6", &["s3", "s4"]),
            ("s7", &["s5", "s6"]),
        ];
        let subtasks = edges
            .iter()
            .map(|(id, deps)| Subtask {
                id: id.to_string(),
                job_id: "fig2".into(),
                deps: deps.iter().map(|d| d.to_string()).collect(),
                data_in_bits: 1e5,
                data_out_bits: 1e5,
                cpu_cycles: 1e8,
                deadline_ms: 100.0,
                pinned_local: false,
            })
            .collect();
        let mut job = DagJob {
            job_id: "fig2".into(),
            origin_device: "mobile0".into(),
            submit_time_ms: 0.0,
            subtasks,
        };
        mark_pinned(&mut job);
        job
    }

    #[test]
    fn fig2_topology_is_valid_and_pins_entry_exit_only() {
        let job = fig2_job();
        assert!(validate_dag(&job).is_ok());
        let pinned: Vec<&str> = job
            .subtasks
            .iter()
            .filter(|s| s.pinned_local)
            .map(|s| s.id.as_str())
            .collect();
        assert_eq!(pinned, vec!["s1", "s7"]);
    }

    #[test]
    fn two_cycle_is_reported_with_members() {
        let mut job = fig2_job();
        job.subtasks.truncate(2);
        job.subtasks[0].deps = vec!["s2".into()];
        job.subtasks[1].deps = vec!["s1".into()];
        let err = validate_dag(&job).unwrap_err();
        match err {
            WorkloadError::Cycle { mut members, .. } => {
                members.sort();
                assert_eq!(members, vec!["s1".to_string(), "s2".to_string()]);
            }
            other => panic!("expected cycle, got {other:?}"),
        }
    }

    #[test]
    fn generator_is_deterministic() {
        let cfg = WorkloadConfig {
            n_jobs: 20,
            ..WorkloadConfig::default()
        };
        let a = generate_synthetic(&cfg).unwrap();
        let b = generate_synthetic(&cfg).unwrap();
        assert_eq!(serialize_trace(&a), serialize_trace(&b));
    }

    #[test]
    fn zero_density_means_no_deps() {
        let cfg = WorkloadConfig {
            n_jobs: 10,
            edge_density: 0.0,
            ..WorkloadConfig::default()
        };
        for job in generate_synthetic(&cfg).unwrap() {
            assert!(job.subtasks.iter().all(|s| s.deps.is_empty()));
        }
    }

    #[test]
    fn generated_counts_stay_in_range() {
        let cfg = WorkloadConfig {
            n_jobs: 100,
            subtasks_min: 1,
            subtasks_max: 8,
            ..WorkloadConfig::default()
        };
        let jobs = generate_synthetic(&cfg).unwrap();
        assert_eq!(jobs.len(), 100);
        for job in &jobs {
            assert!((1..=8).contains(&job.subtasks.len()));
            for s in &job.subtasks {
                assert!(s.data_in_bits >= cfg.data_in_bits.lo && s.data_in_bits < cfg.data_in_bits.hi);
                assert!(s.cpu_cycles >= cfg.cpu_cycles.lo && s.cpu_cycles < cfg.cpu_cycles.hi);
                assert!(s.deadline_ms >= cfg.deadline_ms.lo && s.deadline_ms < cfg.deadline_ms.hi);
            }
        }
    }

    /// Independent DFS cycle check used as the oracle for generated DAGs.
    fn has_cycle_dfs(job: &DagJob) -> bool {
        let index: HashMap<&str, usize> = job
            .subtasks
            .iter()
            .enumerate()
            .map(|(i, s)| (s.id.as_str(), i))
            .collect();
        let n = job.subtasks.len();
        let mut state = vec![0u8; n]; // 0 unvisited, 1 in-progress, 2 done
        fn visit(v: usize, job: &DagJob, index: &HashMap<&str, usize>, state: &mut [u8]) -> bool {
            state[v] = 1;
            for d in &job.subtasks[v].deps {
                let u = index[d.as_str()];
                if state[u] == 1 || (state[u] == 0 && visit(u, job, index, state)) {
                    return true;
                }
            }
            state[v] = 2;
            false
        }
        (0..n).any(|v| state[v] == 0 && visit(v, job, &index, &mut state))
    }

    #[test]
    fn fifty_node_random_dags_are_acyclic() {
        let cfg = WorkloadConfig {
            n_jobs: 20,
            subtasks_min: 50,
            subtasks_max: 50,
            edge_density: 0.15,
            seed: 7,
            ..WorkloadConfig::default()
        };
        for job in generate_synthetic(&cfg).unwrap() {
            assert!(validate_dag(&job).is_ok());
            assert!(!has_cycle_dfs(&job));
        }
    }

    #[test]
    fn topological_order_length_matches_iff_acyclic() {
        let ok = fig2_job();
        assert_eq!(topological_order(&ok).unwrap().len(), ok.subtasks.len());
        let mut bad = fig2_job();
        bad.subtasks[0].deps = vec!["s7".into()];
        assert!(topological_order(&bad).is_none());
    }
}
