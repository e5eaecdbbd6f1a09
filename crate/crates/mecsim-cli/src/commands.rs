use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context};
use mecsim_agents::{
    comddpg, eval_policy, train_kind, PolicyKind, TrainConfig, TrainError, TrainLog,
};
use mecsim_core::env::RunOutput;
use mecsim_core::metrics::MetricsReport;
use mecsim_core::workload::{parse_trace, DagJob};
use mecsim_nn::checkpoint::Checkpoint;

use crate::config::ExperimentConfig;

/// Exit codes fixed by the interface contract.
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_DIVERGENCE: i32 = 3;
pub const EXIT_GRADCHECK: i32 = 4;

#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.message)
    }
}

impl std::error::Error for CliError {}

fn config_err<E: std::fmt::Display>(e: E) -> CliError {
    CliError {
        code: EXIT_CONFIG,
        message: e.to_string(),
    }
}

pub fn checkpoint_path(out: &Path, policy: PolicyKind, seed: u64) -> PathBuf {
    out.join(format!("checkpoint_{}_{}.json", policy.name(), seed))
}

fn write(out: &Path, name: &str, content: &str) -> Result<(), CliError> {
    std::fs::create_dir_all(out).map_err(config_err)?;
    std::fs::write(out.join(name), content).map_err(config_err)?;
    Ok(())
}

/// Resolve the evaluation workload: an explicit trace wins, otherwise the
/// configured source.
pub fn test_workload(
    cfg: &ExperimentConfig,
    trace_override: Option<&Path>,
) -> Result<Vec<DagJob>, CliError> {
    let trace_path = trace_override
        .map(|p| p.to_path_buf())
        .or_else(|| {
            if cfg.workload.source == "trace" {
                cfg.workload.trace_path.as_ref().map(PathBuf::from)
            } else {
                None
            }
        });
    match trace_path {
        Some(path) => {
            let text = std::fs::read_to_string(&path)
                .map_err(|e| config_err(format!("cannot read trace {}: {e}", path.display())))?;
            parse_trace(&text).map_err(config_err)
        }
        None => mecsim_core::workload::generate_synthetic(
            &cfg.workload.test_generator(cfg.cluster.n_mobile),
        )
        .map_err(config_err),
    }
}

fn write_run_output(
    out: &Path,
    policy: PolicyKind,
    seed: u64,
    run: &RunOutput,
) -> Result<(), CliError> {
    let mut metrics_csv = String::from(MetricsReport::CSV_HEADER);
    metrics_csv.push('\n');
    for report in &run.checkpoints {
        metrics_csv.push_str(&report.csv_row());
        metrics_csv.push('\n');
    }
    let last_jobs = run.checkpoints.last().map(|r| r.jobs_completed);
    if last_jobs != Some(run.report.jobs_completed) {
        metrics_csv.push_str(&run.report.csv_row());
        metrics_csv.push('\n');
    }
    write(
        out,
        &format!("metrics_{}_{}.csv", policy.name(), seed),
        &metrics_csv,
    )?;
    write(
        out,
        &format!("events_{}_{}.csv", policy.name(), seed),
        &run.events.to_csv(),
    )?;
    let summary = serde_json::to_string_pretty(&run.report).map_err(config_err)?;
    write(
        out,
        &format!("summary_{}_{}.json", policy.name(), seed),
        &summary,
    )?;
    Ok(())
}

/// `simulate`: run every configured policy on the test workload for every
/// seed, writing metrics checkpoints, event logs and summaries.
pub fn cmd_simulate(
    cfg: &ExperimentConfig,
    out: &Path,
    trace: Option<&Path>,
) -> Result<(), CliError> {
    let jobs = test_workload(cfg, trace)?;
    let cluster = cfg.cluster.build();
    for policy in cfg.policy_kinds() {
        for &seed in &cfg.seeds {
            let params = if policy.is_learner() {
                let path = checkpoint_path(out, policy, seed);
                let ck = Checkpoint::load(&path).map_err(|e| {
                    config_err(format!(
                        "policy {} seed {seed}: cannot load checkpoint {}: {e}; run `mecsim train` first",
                        policy.name(),
                        path.display()
                    ))
                })?;
                Some(ck.params)
            } else {
                None
            };
            let mut boxed = mecsim_agents::greedy_policy(
                policy,
                &cluster,
                &cfg.env,
                &cfg.net,
                params.as_deref(),
                seed,
            )
            .map_err(config_err)?;
            let run = eval_policy(boxed.as_mut(), &jobs, &cluster, &cfg.env)
                .map_err(|e| config_err(format!("{} seed {seed}: {e}", policy.name())))?;
            write_run_output(out, policy, seed, &run)?;
        }
    }
    write(out, "effective_config.toml", &cfg.to_toml())?;
    Ok(())
}

fn topology_json(cfg: &ExperimentConfig, policy: PolicyKind) -> serde_json::Value {
    serde_json::json!({
        "policy": policy.name(),
        "obs_dim": cfg.env.obs_dim(cfg.cluster.n_mobile + cfg.cluster.m_edge),
        "n_actions": cfg.cluster.n_mobile + cfg.cluster.m_edge + 1,
        "net": serde_json::to_value(&cfg.net).expect("net serializes"),
    })
}

/// `train`: fit every learning policy per seed; write per-episode logs and
/// final checkpoints.
pub fn cmd_train(cfg: &ExperimentConfig, out: &Path) -> Result<(), CliError> {
    let learners: Vec<PolicyKind> = cfg
        .policy_kinds()
        .into_iter()
        .filter(|p| p.is_learner())
        .collect();
    if learners.is_empty() {
        return Err(config_err("no learning policies listed; nothing to train"));
    }
    let cluster = cfg.cluster.build();
    let train_jobs = mecsim_core::workload::generate_synthetic(
        &cfg.workload.train_generator(cfg.cluster.n_mobile),
    )
    .map_err(config_err)?;
    for policy in learners {
        for &seed in &cfg.seeds {
            let train_cfg = TrainConfig {
                seed,
                ..cfg.train.clone()
            };
            let (log, params) =
                train_kind(policy, &train_jobs, &cluster, &cfg.env, &cfg.net, &train_cfg)
                    .map_err(|e| match e {
                        TrainError::Diverged { .. } => CliError {
                            code: EXIT_DIVERGENCE,
                            message: e.to_string(),
                        },
                        other => config_err(other),
                    })?;
            write(
                out,
                &format!("train_{}_{}.csv", policy.name(), seed),
                &log.to_csv(),
            )?;
            let ck = Checkpoint::new(policy.name(), topology_json(cfg, policy), params);
            std::fs::create_dir_all(out).map_err(config_err)?;
            ck.save(&checkpoint_path(out, policy, seed))
                .map_err(config_err)?;
        }
    }
    write(out, "effective_config.toml", &cfg.to_toml())?;
    Ok(())
}

fn percentile(sorted: &[f64], p: f64) -> f64 {
    if sorted.is_empty() {
        return 0.0;
    }
    let pos = p * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    if lo == hi {
        sorted[lo]
    } else {
        sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
    }
}

/// `report`: derive the four summary tables from a finished run directory.
/// Missing inputs produce a partial report plus a warnings file.
pub fn cmd_report(run_dir: &Path) -> Result<(), anyhow::Error> {
    let report_dir = run_dir.join("report");
    std::fs::create_dir_all(&report_dir)
        .with_context(|| format!("cannot create {}", report_dir.display()))?;
    let mut warnings: Vec<String> = Vec::new();

    let entries: Vec<PathBuf> = std::fs::read_dir(run_dir)
        .with_context(|| format!("cannot read run directory {}", run_dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .collect();
    let stems = |prefix: &str| -> Vec<(String, u64, PathBuf)> {
        let mut found: Vec<(String, u64, PathBuf)> = entries
            .iter()
            .filter_map(|p| {
                let name = p.file_name()?.to_str()?;
                let rest = name.strip_prefix(prefix)?;
                let rest = rest.strip_suffix(".csv").or_else(|| rest.strip_suffix(".json"))?;
                let (policy, seed) = rest.rsplit_once('_')?;
                Some((policy.to_string(), seed.parse().ok()?, p.clone()))
            })
            .collect();
        found.sort();
        found
    };

    // Loss vs iteration.
    let mut loss_csv = String::from("policy,seed,episode,td_loss,smoothed_loss,paper_loss,mean_reward\n");
    let train_files = stems("train_");
    if train_files.is_empty() {
        warnings.push("no training logs found (train_*.csv)".into());
    }
    for (policy, seed, path) in &train_files {
        let text = std::fs::read_to_string(path)?;
        match TrainLog::parse_csv(policy, *seed, &text) {
            Some(log) => {
                for r in &log.rows {
                    loss_csv.push_str(&format!(
                        "{},{},{},{},{},{},{}\n",
                        policy, seed, r.episode, r.td_loss, r.smoothed_loss, r.paper_loss, r.mean_reward
                    ));
                }
            }
            None => warnings.push(format!("malformed training log {}", path.display())),
        }
    }
    std::fs::write(report_dir.join("loss_vs_iteration.csv"), loss_csv)?;

    // Makespan distribution per 10-job block (submit order from events).
    let mut blocks_csv =
        String::from("policy,seed,block,makespan_min_ms,makespan_q1_ms,makespan_median_ms,makespan_q3_ms,makespan_max_ms\n");
    let summary_files = stems("summary_");
    if summary_files.is_empty() {
        warnings.push("no run summaries found (summary_*.json)".into());
    }
    for (policy, seed, path) in &summary_files {
        let report: MetricsReport = serde_json::from_str(&std::fs::read_to_string(path)?)
            .with_context(|| format!("malformed summary {}", path.display()))?;
        let events_path = run_dir.join(format!("events_{policy}_{seed}.csv"));
        let submit_of = match std::fs::read_to_string(&events_path) {
            Ok(text) => job_submit_times_from_events(&text),
            Err(_) => {
                warnings.push(format!(
                    "missing event log {}; block order falls back to job id",
                    events_path.display()
                ));
                BTreeMap::new()
            }
        };
        let mut jobs: Vec<(&String, &f64)> = report.makespan_ms.iter().collect();
        jobs.sort_by(|a, b| {
            let ta = submit_of.get(a.0).copied().unwrap_or(0.0);
            let tb = submit_of.get(b.0).copied().unwrap_or(0.0);
            ta.partial_cmp(&tb)
                .unwrap_or(std::cmp::Ordering::Equal)
                .then_with(|| a.0.cmp(b.0))
        });
        for (block_idx, chunk) in jobs.chunks(10).enumerate() {
            let mut v: Vec<f64> = chunk.iter().map(|(_, m)| **m).collect();
            v.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
            blocks_csv.push_str(&format!(
                "{},{},{},{},{},{},{},{}\n",
                policy,
                seed,
                block_idx,
                v[0],
                percentile(&v, 0.25),
                percentile(&v, 0.5),
                percentile(&v, 0.75),
                v[v.len() - 1]
            ));
        }
    }
    std::fs::write(report_dir.join("makespan_blocks.csv"), blocks_csv)?;

    // Service-times matrix.
    let mut st_csv = String::from("policy,seed,device,executed_subtasks\n");
    for (policy, seed, path) in &summary_files {
        let report: MetricsReport = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        for (device, count) in &report.service_times {
            st_csv.push_str(&format!("{policy},{seed},{device},{count}\n"));
        }
    }
    std::fs::write(report_dir.join("service_times.csv"), st_csv)?;

    // Metrics vs job count.
    let mut metrics_csv = format!("policy,seed,{}\n", MetricsReport::CSV_HEADER);
    let metric_files = stems("metrics_");
    if metric_files.is_empty() {
        warnings.push("no metric checkpoints found (metrics_*.csv)".into());
    }
    for (policy, seed, path) in &metric_files {
        let text = std::fs::read_to_string(path)?;
        for line in text.lines().skip(1) {
            if !line.trim().is_empty() {
                metrics_csv.push_str(&format!("{policy},{seed},{line}\n"));
            }
        }
    }
    std::fs::write(report_dir.join("metrics_vs_jobcount.csv"), metrics_csv)?;

    if !warnings.is_empty() {
        let mut text = String::from("partial report; missing inputs:\n");
        for w in &warnings {
            text.push_str(&format!("- {w}\n"));
        }
        std::fs::write(report_dir.join("warnings.txt"), text)?;
        eprintln!("report incomplete: {} warning(s) written", warnings.len());
    }
    Ok(())
}

fn job_submit_times_from_events(text: &str) -> BTreeMap<String, f64> {
    let mut map: BTreeMap<String, f64> = BTreeMap::new();
    for line in text.lines().skip(1) {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 5 || fields[1] != "submit" {
            continue;
        }
        let (Ok(t), Some(job)) = (fields[0].parse::<f64>(), fields[2].split('/').next()) else {
            continue;
        };
        let entry = map.entry(job.to_string()).or_insert(t);
        if t < *entry {
            *entry = t;
        }
    }
    map
}

/// `gradcheck`: exercise every backward pass and the full actor loss;
/// errors above 1e-4 fail with the dedicated exit code.
pub fn cmd_gradcheck(seed: u64) -> Result<(), CliError> {
    let mut rows = mecsim_nn::gradcheck::run_all(seed);
    rows.push(mecsim_nn::gradcheck::LayerCheck {
        name: "comddpg_actor_loss",
        max_rel_err: comddpg::actor_gradcheck(seed + 5),
    });
    println!("{:<20} {:>14}", "layer", "max_rel_err");
    let mut worst: f64 = 0.0;
    for row in &rows {
        println!("{:<20} {:>14.3e}", row.name, row.max_rel_err);
        worst = worst.max(row.max_rel_err);
    }
    if worst >= 1e-4 {
        return Err(CliError {
            code: EXIT_GRADCHECK,
            message: format!("gradient check failed: max relative error {worst:.3e} >= 1e-4"),
        });
    }
    println!("all gradients within 1e-4");
    Ok(())
}

/// Parse `--seeds a,b,c`.
pub fn parse_seeds(s: &str) -> Result<Vec<u64>, anyhow::Error> {
    s.split(',')
        .map(|x| {
            x.trim()
                .parse::<u64>()
                .map_err(|e| anyhow!("bad seed {x}: {e}"))
        })
        .collect()
}

pub fn apply_overrides(
    cfg: &mut ExperimentConfig,
    out: Option<&Path>,
    seeds: Option<&str>,
) -> Result<PathBuf, anyhow::Error> {
    if let Some(s) = seeds {
        cfg.seeds = parse_seeds(s)?;
        if cfg.seeds.is_empty() {
            bail!("seed list must not be empty");
        }
    }
    let out_dir = out
        .map(|p| p.to_path_buf())
        .unwrap_or_else(|| PathBuf::from(&cfg.out_dir));
    cfg.out_dir = out_dir.display().to_string();
    Ok(out_dir)
}
