use mecsim_core::env::{global_to_ego, DecisionRound, OffloadEnv, Policy};
use mecsim_core::metrics::DeviceKind;

/// Prefer local execution; fall back to the lowest-index valid device.
#[derive(Debug, Default)]
pub struct LocalPolicy;

impl Policy for LocalPolicy {
    fn name(&self) -> &'static str {
        "local"
    }

    fn select_actions(&mut self, _env: &OffloadEnv, round: &DecisionRound) -> Vec<usize> {
        round
            .masks
            .iter()
            .map(|m| {
                if m.is_valid(0) {
                    0
                } else {
                    m.first_valid().expect("round entries have a valid action")
                }
            })
            .collect()
    }
}

/// First-fit over edge servers in ascending id order; falls back to the
/// cloud, then to local execution.
#[derive(Debug, Default)]
pub struct EdgeFirstPolicy;

impl Policy for EdgeFirstPolicy {
    fn name(&self) -> &'static str {
        "edge-first"
    }

    fn select_actions(&mut self, env: &OffloadEnv, round: &DecisionRound) -> Vec<usize> {
        let sim = &env.sim;
        let n_devices = sim.device_count();
        round
            .decisions
            .iter()
            .zip(&round.masks)
            .map(|(d, mask)| {
                let try_devices = (0..n_devices)
                    .filter(|&dev| sim.device_kind(dev) == DeviceKind::Edge)
                    .chain((0..n_devices).filter(|&dev| sim.device_kind(dev) == DeviceKind::Cloud));
                for device in try_devices {
                    let ego = global_to_ego(d.agent, device);
                    if mask.is_valid(ego) {
                        return ego;
                    }
                }
                if mask.is_valid(0) {
                    0
                } else {
                    mask.first_valid().expect("round entries have a valid action")
                }
            })
            .collect()
    }
}
