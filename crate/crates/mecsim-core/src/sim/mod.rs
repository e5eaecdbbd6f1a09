//! Deterministic discrete-time cluster engine: message queues per edge
//! region, transfer and execution progression at piecewise-constant rates,
//! event logging and incremental accounting.

mod config;
mod event;
mod queue;
mod report;
mod state;

pub use config::{ClusterConfig, NamedProfile, SimError};
pub use event::{EventKind, EventLog, SimEvent};
pub use queue::MessageQueue;
pub use report::report_from_run;
pub use state::{
    AgentDecision, Decision, IntervalAccum, JobSummary, RunAccounting, SimState, TaskPhase,
};
