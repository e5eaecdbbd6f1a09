//! Core model of a mobile-edge-computing cluster: DAG workloads, AHP task
//! priorities, energy/latency/load/network cost kernels, a deterministic
//! discrete-time offloading simulator and the agent-facing environment.

pub mod env;
pub mod metrics;
pub mod priority;
pub mod sim;
pub mod workload;

pub use env::{ActionMask, Observation, OffloadEnv, Policy, Transition};
pub use metrics::{DeviceKind, DeviceProfile, MetricsReport};
pub use sim::{ClusterConfig, SimState};
pub use workload::{DagJob, Subtask, WorkloadConfig};
