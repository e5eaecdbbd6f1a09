use std::collections::BTreeMap;

use crate::metrics::{
    average_latency, load_status, network_usage, total_energy, ClusterTrace, DeviceProfile,
    MetricsError, MetricsReport,
};

use super::event::{EventKind, EventLog};

/// Recompute a [`MetricsReport`] from the closed event log and usage trace,
/// independently of the engine's incremental accounting. The window is
/// `[0, t_ms]`; only jobs completed inside the window contribute to makespan,
/// latency and the application count.
pub fn report_from_run(
    events: &EventLog,
    trace: &ClusterTrace,
    profiles: &BTreeMap<String, DeviceProfile>,
    job_submit_times: &[(String, f64)],
    load_weights: &[f64; 2],
    t_ms: f64,
) -> Result<MetricsReport, MetricsError> {
    let submit_of: BTreeMap<&str, f64> = job_submit_times
        .iter()
        .map(|(id, t)| (id.as_str(), *t))
        .collect();

    // Per-subtask transfer/exec spans within the window.
    #[derive(Default, Clone)]
    struct Span {
        trans_ms: f64,
        exec_start: Option<f64>,
        exec_end: Option<f64>,
        exec_device: Option<String>,
        open_transfer: Vec<(String, f64)>, // device, start time
    }
    let mut spans: BTreeMap<&str, Span> = BTreeMap::new();
    let mut transferred_bits = 0.0;
    for e in events.iter() {
        if e.time_ms > t_ms + 1e-9 {
            continue;
        }
        let s = spans.entry(e.subtask.as_str()).or_default();
        match e.kind {
            EventKind::Submit => {}
            EventKind::TransferStart => s.open_transfer.push((e.device.clone(), e.time_ms)),
            EventKind::TransferEnd => {
                // Pair with the earliest open leg on the same device.
                if let Some(pos) = s.open_transfer.iter().position(|(d, _)| d == &e.device) {
                    let (_, start) = s.open_transfer.remove(pos);
                    s.trans_ms += e.time_ms - start;
                }
                transferred_bits += e.quantity;
            }
            EventKind::ExecStart => {
                s.exec_start = Some(e.time_ms);
                s.exec_device = Some(e.device.clone());
            }
            EventKind::ExecEnd => s.exec_end = Some(e.time_ms),
        }
    }

    // Group per job; a job is complete when all its subtasks that appeared
    // in the log have finished executing and its submit time is known.
    let mut per_job: BTreeMap<String, Vec<(&str, &Span)>> = BTreeMap::new();
    for (key, span) in &spans {
        let job_id = key.split('/').next().unwrap_or(key);
        per_job.entry(job_id.to_string()).or_default().push((key, span));
    }

    let mut makespans: BTreeMap<String, f64> = BTreeMap::new();
    let mut latencies_per_app: Vec<Vec<(f64, f64)>> = Vec::new();
    let mut service: BTreeMap<String, u64> = BTreeMap::new();
    for (job_id, subs) in &per_job {
        let complete = subs
            .iter()
            .all(|(_, s)| s.exec_end.is_some() && s.open_transfer.is_empty());
        // Count executed subtasks regardless of job completion.
        for (_, s) in subs {
            if s.exec_end.is_some() {
                if let Some(dev) = &s.exec_device {
                    *service.entry(dev.clone()).or_insert(0) += 1;
                }
            }
        }
        if !complete {
            continue;
        }
        let Some(&submit) = submit_of.get(job_id.as_str()) else {
            continue;
        };
        let completion = subs
            .iter()
            .filter_map(|(_, s)| s.exec_end)
            .fold(f64::NEG_INFINITY, f64::max);
        makespans.insert(job_id.clone(), completion - submit);
        latencies_per_app.push(
            subs.iter()
                .map(|(_, s)| {
                    let comp = match (s.exec_start, s.exec_end) {
                        (Some(a), Some(b)) => b - a,
                        _ => 0.0,
                    };
                    (s.trans_ms, comp)
                })
                .collect(),
        );
    }

    let jobs_completed = makespans.len();
    let avg_latency_ms = if latencies_per_app.is_empty() {
        0.0
    } else {
        average_latency(&latencies_per_app)?
    };
    let window = t_ms.min(trace.end_ms());
    let energy_j = total_energy(trace, profiles, 0.0, window)?;
    let (_, ls) = load_status(trace, load_weights, 0.0, window)?;
    let nu = network_usage(
        transferred_bits,
        avg_latency_ms / 1000.0,
        jobs_completed,
        window / 1000.0,
    );
    Ok(MetricsReport {
        jobs_completed,
        energy_j,
        avg_latency_ms,
        load_status: ls,
        network_usage: nu,
        makespan_ms: makespans,
        service_times: service,
    })
}
