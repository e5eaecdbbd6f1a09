use serde::{Deserialize, Serialize};

use crate::metrics::{DeviceKind, DeviceProfile, MetricsError};

#[derive(Debug, thiserror::Error)]
pub enum SimError {
    #[error("invalid cluster config: {0}")]
    Config(String),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("unknown device id {0}")]
    UnknownDevice(String),
    #[error("job {0} originates from unknown device {1}")]
    UnknownOrigin(String, String),
    #[error("simulation exceeded {0} steps without completing")]
    StepLimit(u64),
    #[error("action {action} for task {task} is masked or out of range")]
    InvalidAction { task: String, action: usize },
}

/// A device profile bound to an id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedProfile {
    pub id: String,
    pub profile: DeviceProfile,
}

/// Cluster layout: mobile devices, edge servers grouped into proximity
/// regions, and one cloud node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterConfig {
    pub mobiles: Vec<NamedProfile>,
    pub edges: Vec<NamedProfile>,
    pub cloud: NamedProfile,
    /// Edge ids per region; every edge belongs to exactly one region.
    pub regions: Vec<Vec<String>>,
    /// Region index of each mobile device (its nearest region).
    pub mobile_regions: Vec<usize>,
    pub step_ms: f64,
    /// Safety bound on run length.
    pub max_steps: u64,
}

impl ClusterConfig {
    /// Build a symmetric cluster: `n` identical mobiles, `m` identical edge
    /// servers split evenly over `n_regions` regions (in id order), one
    /// cloud. Mobiles are assigned to regions round-robin.
    pub fn symmetric(
        n_mobile: usize,
        m_edge: usize,
        n_regions: usize,
        mobile: DeviceProfile,
        edge: DeviceProfile,
        cloud: DeviceProfile,
        step_ms: f64,
    ) -> Self {
        let mobiles = (0..n_mobile)
            .map(|i| NamedProfile {
                id: format!("mobile{i}"),
                profile: mobile.clone(),
            })
            .collect();
        let edges: Vec<NamedProfile> = (0..m_edge)
            .map(|i| NamedProfile {
                id: format!("edge{i}"),
                profile: edge.clone(),
            })
            .collect();
        let n_regions = n_regions.max(1).min(m_edge.max(1));
        let per_region = m_edge.div_ceil(n_regions);
        let mut regions = vec![Vec::new(); n_regions];
        for (i, e) in edges.iter().enumerate() {
            regions[(i / per_region).min(n_regions - 1)].push(e.id.clone());
        }
        let mobile_regions = (0..n_mobile).map(|i| i % n_regions).collect();
        ClusterConfig {
            mobiles,
            edges,
            cloud: NamedProfile {
                id: "cloud".into(),
                profile: cloud,
            },
            regions,
            mobile_regions,
            step_ms,
            max_steps: 10_000_000,
        }
    }

    pub fn n_mobile(&self) -> usize {
        self.mobiles.len()
    }

    pub fn m_edge(&self) -> usize {
        self.edges.len()
    }

    /// Total device count including the cloud (1 + m + n).
    pub fn device_count(&self) -> usize {
        self.mobiles.len() + self.edges.len() + 1
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if self.mobiles.is_empty() || self.edges.is_empty() {
            return Err(SimError::Config("need at least one mobile and one edge".into()));
        }
        if !(self.step_ms > 0.0) {
            return Err(SimError::Config("step_ms must be positive".into()));
        }
        let mut ids = std::collections::HashSet::new();
        for np in self
            .mobiles
            .iter()
            .chain(self.edges.iter())
            .chain(std::iter::once(&self.cloud))
        {
            if !ids.insert(np.id.clone()) {
                return Err(SimError::Config(format!("duplicate device id {}", np.id)));
            }
            np.profile.validate()?;
            if !(np.profile.tx_power_watts > 0.0) {
                return Err(SimError::Config(format!(
                    "device {} must have positive tx power",
                    np.id
                )));
            }
        }
        for (i, np) in self.mobiles.iter().enumerate() {
            if np.profile.kind != DeviceKind::Mobile {
                return Err(SimError::Config(format!("device {} must be kind mobile", np.id)));
            }
            if self.mobile_regions.get(i).copied().unwrap_or(usize::MAX) >= self.regions.len() {
                return Err(SimError::Config(format!(
                    "mobile {} has no valid region assignment",
                    np.id
                )));
            }
        }
        for np in &self.edges {
            if np.profile.kind != DeviceKind::Edge {
                return Err(SimError::Config(format!("device {} must be kind edge", np.id)));
            }
        }
        if self.cloud.profile.kind != DeviceKind::Cloud {
            return Err(SimError::Config("cloud device must be kind cloud".into()));
        }
        // Every edge in exactly one region.
        let mut seen = std::collections::HashSet::new();
        for region in &self.regions {
            for id in region {
                if !self.edges.iter().any(|e| &e.id == id) {
                    return Err(SimError::Config(format!("region lists unknown edge {id}")));
                }
                if !seen.insert(id.clone()) {
                    return Err(SimError::Config(format!("edge {id} in multiple regions")));
                }
            }
        }
        if seen.len() != self.edges.len() {
            return Err(SimError::Config("some edge belongs to no region".into()));
        }
        // The cloud must be the fastest node in the cluster.
        let max_rate = self
            .mobiles
            .iter()
            .chain(self.edges.iter())
            .map(|np| np.profile.proc_rate_cycles_per_s)
            .fold(0.0, f64::max);
        if self.cloud.profile.proc_rate_cycles_per_s < max_rate {
            return Err(SimError::Config(
                "cloud must have the largest proc rate in the cluster".into(),
            ));
        }
        Ok(())
    }
}
