//! Closed-form cost kernels evaluated over piecewise-constant step series:
//! computing and transmission energy, transfer and computation latency,
//! cluster load status and network usage. All integrals are exact sums over
//! the step grid.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum MetricsError {
    #[error("usage fraction {0} outside [0, 1]")]
    UsageOutOfRange(f64),
    #[error("window [{t0}, {t1}] ms outside trace domain [{lo}, {hi}] ms")]
    WindowOutsideTrace { t0: f64, t1: f64, lo: f64, hi: f64 },
    #[error("transfer stalled: {remaining} of {total} bits left with zero bandwidth")]
    Stalled { remaining: f64, total: f64 },
    #[error("series exhausted with {remaining} of {total} units left")]
    SeriesTooShort { remaining: f64, total: f64 },
    #[error("load weights must sum to 1, got {0}")]
    BadLoadWeights(f64),
    #[error("no applications to average over")]
    NoApplications,
    #[error("invalid device profile: {0}")]
    BadProfile(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DeviceKind {
    Mobile,
    Edge,
    Cloud,
}

impl std::fmt::Display for DeviceKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            DeviceKind::Mobile => write!(f, "mobile"),
            DeviceKind::Edge => write!(f, "edge"),
            DeviceKind::Cloud => write!(f, "cloud"),
        }
    }
}

/// Physical parameters of one compute node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviceProfile {
    pub kind: DeviceKind,
    /// Full-load power draw in watts.
    pub p_full_watts: f64,
    /// Idle-to-full power ratio applied to the usage fraction.
    pub k_ratio: f64,
    /// Execution speed in cycles per second.
    pub proc_rate_cycles_per_s: f64,
    /// Channel gain, linear (e.g. -50 dB is 1e-5).
    pub channel_gain: f64,
    /// Channel noise power in watts.
    pub noise_watts: f64,
    /// Interference power between devices in watts.
    pub interference_watts: f64,
    /// Channel bandwidth in hertz.
    pub bandwidth_hz: f64,
    /// Transmit power budget in watts; the channel rate follows from it.
    pub tx_power_watts: f64,
    /// Admission capacity in cycles per second backing the resource check.
    pub cpu_capacity_cycles_per_s: f64,
    /// Admission capacity in bytes.
    pub mem_bytes: f64,
}

impl DeviceProfile {
    pub fn validate(&self) -> Result<(), MetricsError> {
        let pos = [
            ("p_full_watts", self.p_full_watts),
            ("proc_rate_cycles_per_s", self.proc_rate_cycles_per_s),
            ("channel_gain", self.channel_gain),
            ("noise_watts", self.noise_watts),
            ("bandwidth_hz", self.bandwidth_hz),
            ("cpu_capacity_cycles_per_s", self.cpu_capacity_cycles_per_s),
            ("mem_bytes", self.mem_bytes),
        ];
        for (name, v) in pos {
            if !(v > 0.0) || !v.is_finite() {
                return Err(MetricsError::BadProfile(format!("{name} must be positive")));
            }
        }
        if !(self.k_ratio > 0.0 && self.k_ratio <= 1.0) {
            return Err(MetricsError::BadProfile("k_ratio must be in (0, 1]".into()));
        }
        if self.interference_watts < 0.0 || self.tx_power_watts < 0.0 {
            return Err(MetricsError::BadProfile(
                "interference and tx power must be non-negative".into(),
            ));
        }
        Ok(())
    }
}

/// Per-device step series recorded by the simulator. `cpu` and `mem` hold
/// the time-averaged usage fraction within each step; bit counters hold the
/// exact volume moved within the step; `tx_active_s` is the transmitting
/// time within the step in seconds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviceTrace {
    pub device: String,
    pub cpu: Vec<f64>,
    pub mem: Vec<f64>,
    pub bits_up: Vec<f64>,
    pub bits_down: Vec<f64>,
    pub tx_active_s: Vec<f64>,
}

/// Shared-grid usage traces for the whole cluster.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterTrace {
    pub start_ms: f64,
    pub step_ms: f64,
    pub devices: Vec<DeviceTrace>,
}

impl ClusterTrace {
    pub fn steps(&self) -> usize {
        self.devices.first().map(|d| d.cpu.len()).unwrap_or(0)
    }

    pub fn end_ms(&self) -> f64 {
        self.start_ms + self.step_ms * self.steps() as f64
    }

    pub fn device(&self, id: &str) -> Option<&DeviceTrace> {
        self.devices.iter().find(|d| d.device == id)
    }
}

/// Instantaneous device power at usage fraction `u`: `K * P_full * u` when
/// busy, zero when idle.
pub fn device_power(u: f64, profile: &DeviceProfile) -> Result<f64, MetricsError> {
    if !(0.0..=1.0).contains(&u) || !u.is_finite() {
        return Err(MetricsError::UsageOutOfRange(u));
    }
    Ok(if u > 0.0 {
        profile.k_ratio * profile.p_full_watts * u
    } else {
        0.0
    })
}

/// Integrate a per-step series over a window, weighting boundary steps by
/// fractional overlap. `f` maps a step sample to an instantaneous value; the
/// result is in value-seconds.
fn integrate_window(
    series: &[f64],
    start_ms: f64,
    step_ms: f64,
    t0_ms: f64,
    t_ms: f64,
    f: impl Fn(f64) -> f64,
) -> Result<f64, MetricsError> {
    let end_ms = start_ms + step_ms * series.len() as f64;
    let t1 = t0_ms + t_ms;
    if t_ms < 0.0 || t0_ms < start_ms - 1e-9 || t1 > end_ms + 1e-9 {
        return Err(MetricsError::WindowOutsideTrace {
            t0: t0_ms,
            t1,
            lo: start_ms,
            hi: end_ms,
        });
    }
    let mut acc = 0.0;
    for (i, &v) in series.iter().enumerate() {
        let s0 = start_ms + step_ms * i as f64;
        let s1 = s0 + step_ms;
        let overlap = (t1.min(s1) - t0_ms.max(s0)).max(0.0);
        if overlap > 0.0 {
            acc += f(v) * overlap / 1000.0;
        }
    }
    Ok(acc)
}

/// Computing energy of one device over `[t0, t0 + t]` in joules.
pub fn compute_energy(
    trace: &DeviceTrace,
    profile: &DeviceProfile,
    start_ms: f64,
    step_ms: f64,
    t0_ms: f64,
    t_ms: f64,
) -> Result<f64, MetricsError> {
    for &u in &trace.cpu {
        if !(0.0..=1.0 + 1e-9).contains(&u) {
            return Err(MetricsError::UsageOutOfRange(u));
        }
    }
    integrate_window(&trace.cpu, start_ms, step_ms, t0_ms, t_ms, |u| {
        if u > 0.0 {
            profile.k_ratio * profile.p_full_watts * u
        } else {
            0.0
        }
    })
}

/// Channel rate in bits per second at transmit power `p_watts`.
pub fn transmission_rate(p_watts: f64, profile: &DeviceProfile) -> f64 {
    let snr = p_watts * profile.channel_gain
        / (profile.noise_watts + profile.interference_watts);
    profile.bandwidth_hz * (1.0 + snr).log2()
}

/// Minimum transmit power achieving rate `r` bits per second; the algebraic
/// inverse of `transmission_rate`.
pub fn power_for_rate(r: f64, profile: &DeviceProfile) -> f64 {
    ((r / profile.bandwidth_hz).exp2() - 1.0)
        * (profile.noise_watts + profile.interference_watts)
        / profile.channel_gain
}

/// Transmission energy of one device transmitting at `p_watts` for
/// `duration_s` seconds.
pub fn transmission_energy(p_watts: f64, duration_s: f64) -> f64 {
    p_watts * duration_s
}

/// Total cluster energy over a window: computing energy of every device
/// plus transmission energy of the mobile devices.
pub fn total_energy(
    trace: &ClusterTrace,
    profiles: &BTreeMap<String, DeviceProfile>,
    t0_ms: f64,
    t_ms: f64,
) -> Result<f64, MetricsError> {
    let mut sum = 0.0;
    for dev in &trace.devices {
        let profile = profiles.get(&dev.device).ok_or_else(|| {
            MetricsError::BadProfile(format!("no profile for device {}", dev.device))
        })?;
        sum += compute_energy(dev, profile, trace.start_ms, trace.step_ms, t0_ms, t_ms)?;
        if profile.kind == DeviceKind::Mobile {
            let tx_s = integrate_window(
                &dev.tx_active_s,
                trace.start_ms,
                trace.step_ms,
                t0_ms,
                t_ms,
                // tx_active_s already measures seconds within the step;
                // rescale so the window integral returns plain seconds.
                |active| active * 1000.0 / trace.step_ms,
            )?;
            sum += transmission_energy(profile.tx_power_watts, tx_s);
        }
    }
    Ok(sum)
}

/// One piece of a piecewise-constant rate series: duration in milliseconds
/// and rate in units per second.
pub type RatePiece = (f64, f64);

/// Time in milliseconds to move `volume` units through a piecewise-constant
/// rate series. Errors if the rate is zero while volume remains or the
/// series ends early.
pub fn duration_for_volume(volume: f64, series: &[RatePiece]) -> Result<f64, MetricsError> {
    if volume <= 0.0 {
        return Ok(0.0);
    }
    let mut remaining = volume;
    let mut elapsed_ms = 0.0;
    for &(dur_ms, rate) in series {
        if rate <= 0.0 {
            if dur_ms > 0.0 {
                return Err(MetricsError::Stalled {
                    remaining,
                    total: volume,
                });
            }
            continue;
        }
        let can_move = rate * dur_ms / 1000.0;
        if can_move >= remaining {
            elapsed_ms += remaining / rate * 1000.0;
            return Ok(elapsed_ms);
        }
        remaining -= can_move;
        elapsed_ms += dur_ms;
    }
    Err(MetricsError::SeriesTooShort {
        remaining,
        total: volume,
    })
}

/// Transfer latency of a subtask in milliseconds: the download of its input
/// plus the upload of its output, each gated by its cross-device indicator.
pub fn transfer_latency(
    data_in_bits: f64,
    data_out_bits: f64,
    x_dow: bool,
    x_up: bool,
    down_series: &[RatePiece],
    up_series: &[RatePiece],
) -> Result<f64, MetricsError> {
    let mut total = 0.0;
    if x_dow {
        total += duration_for_volume(data_in_bits, down_series)?;
    }
    if x_up {
        total += duration_for_volume(data_out_bits, up_series)?;
    }
    Ok(total)
}

/// Computation latency in milliseconds: cycles through the effective rate
/// series of the chosen device (remote when offloaded, local otherwise).
pub fn compute_latency(
    cpu_cycles: f64,
    x_off: bool,
    server_series: &[RatePiece],
    local_series: &[RatePiece],
) -> Result<f64, MetricsError> {
    let series = if x_off { server_series } else { local_series };
    duration_for_volume(cpu_cycles, series)
}

/// Average latency over applications: the sum of every subtask's transfer
/// and computation latency divided by the application count.
pub fn average_latency(per_app: &[Vec<(f64, f64)>]) -> Result<f64, MetricsError> {
    if per_app.is_empty() {
        return Err(MetricsError::NoApplications);
    }
    let total: f64 = per_app
        .iter()
        .flat_map(|subs| subs.iter().map(|(trans, comp)| trans + comp))
        .sum();
    Ok(total / per_app.len() as f64)
}

/// Weighted per-device load integrals over a window plus the cluster load
/// status: the root-mean-square deviation of per-device loads from the
/// cluster mean. Indicators are CPU and memory usage.
pub fn load_status(
    trace: &ClusterTrace,
    weights: &[f64; 2],
    t0_ms: f64,
    t_ms: f64,
) -> Result<(Vec<(String, f64)>, f64), MetricsError> {
    let wsum: f64 = weights.iter().sum();
    if (wsum - 1.0).abs() > 1e-9 {
        return Err(MetricsError::BadLoadWeights(wsum));
    }
    let mut loads = Vec::with_capacity(trace.devices.len());
    for dev in &trace.devices {
        let cpu = integrate_window(&dev.cpu, trace.start_ms, trace.step_ms, t0_ms, t_ms, |u| u)?;
        let mem = integrate_window(&dev.mem, trace.start_ms, trace.step_ms, t0_ms, t_ms, |u| u)?;
        loads.push((dev.device.clone(), weights[0] * cpu + weights[1] * mem));
    }
    let mean = loads.iter().map(|(_, l)| l).sum::<f64>() / loads.len().max(1) as f64;
    let var = loads
        .iter()
        .map(|(_, l)| (l - mean) * (l - mean))
        .sum::<f64>()
        / loads.len().max(1) as f64;
    Ok((loads, var.sqrt()))
}

/// Network usage: `NU = LA_avg * AN * TD / t` with the average latency and
/// window in seconds and TD the total bits moved across devices.
pub fn network_usage(total_bits: f64, avg_latency_s: f64, app_count: usize, window_s: f64) -> f64 {
    if window_s <= 0.0 {
        return 0.0;
    }
    avg_latency_s * app_count as f64 * total_bits / window_s
}

/// Total transferred bits recorded in a trace window (uploads plus
/// downloads; each leg is recorded exactly once on its channel device).
pub fn transferred_bits(trace: &ClusterTrace, t0_ms: f64, t_ms: f64) -> Result<f64, MetricsError> {
    let mut total = 0.0;
    for dev in &trace.devices {
        for series in [&dev.bits_up, &dev.bits_down] {
            // Bits are per-step volumes, not rates: rescale so the window
            // integral sums plain bits.
            total += integrate_window(series, trace.start_ms, trace.step_ms, t0_ms, t_ms, |b| {
                b * 1000.0 / trace.step_ms
            })?;
        }
    }
    Ok(total)
}

/// Welford running mean/variance used for reward z-score standardization.
/// The z-score of a sample is taken against the statistics of the samples
/// seen before it; with fewer than two prior samples the z-score is zero.
/// Standardized values are clipped to +-10: early in a run the running
/// deviation can be vanishingly small and would otherwise make single
/// samples explode.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct RunningZScore {
    n: u64,
    mean: f64,
    m2: f64,
}

impl RunningZScore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> u64 {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn std(&self) -> f64 {
        if self.n >= 2 {
            (self.m2 / self.n as f64).sqrt()
        } else {
            0.0
        }
    }

    pub fn z(&self, x: f64) -> f64 {
        let sd = self.std();
        if sd > 0.0 {
            ((x - self.mean) / sd).clamp(-10.0, 10.0)
        } else {
            0.0
        }
    }

    pub fn update(&mut self, x: f64) {
        self.n += 1;
        let delta = x - self.mean;
        self.mean += delta / self.n as f64;
        self.m2 += delta * (x - self.mean);
    }

    /// Z-score against the prior statistics, then fold the sample in.
    pub fn z_then_update(&mut self, x: f64) -> f64 {
        let z = self.z(x);
        self.update(x);
        z
    }
}

/// Aggregated measurements over one interval of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub jobs_completed: usize,
    pub energy_j: f64,
    pub avg_latency_ms: f64,
    pub load_status: f64,
    pub network_usage: f64,
    /// Per-job makespan: completion time minus submission time.
    pub makespan_ms: BTreeMap<String, f64>,
    /// Per-device executed-subtask counts; entries sum to the total number
    /// of executed subtasks.
    pub service_times: BTreeMap<String, u64>,
}

impl MetricsReport {
    pub fn mean_makespan_ms(&self) -> f64 {
        if self.makespan_ms.is_empty() {
            0.0
        } else {
            self.makespan_ms.values().sum::<f64>() / self.makespan_ms.len() as f64
        }
    }

    pub const CSV_HEADER: &'static str =
        "jobs,energy_j,avg_latency_ms,load_status,network_usage,makespan_ms";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{}",
            self.jobs_completed,
            self.energy_j,
            self.avg_latency_ms,
            self.load_status,
            self.network_usage,
            self.mean_makespan_ms()
        )
    }
}
