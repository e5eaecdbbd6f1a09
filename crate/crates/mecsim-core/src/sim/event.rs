use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    Submit,
    TransferStart,
    TransferEnd,
    ExecStart,
    ExecEnd,
}

impl std::fmt::Display for EventKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            EventKind::Submit => "submit",
            EventKind::TransferStart => "transfer_start",
            EventKind::TransferEnd => "transfer_end",
            EventKind::ExecStart => "exec_start",
            EventKind::ExecEnd => "exec_end",
        };
        write!(f, "{s}")
    }
}

/// One lifecycle event. `subtask` is the globally unique `job/task` key;
/// `quantity` carries bits for transfers and cycles for submit/exec events.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimEvent {
    pub time_ms: f64,
    pub kind: EventKind,
    pub subtask: String,
    pub device: String,
    pub quantity: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EventLog {
    pub events: Vec<SimEvent>,
}

impl EventLog {
    pub fn push(&mut self, ev: SimEvent) {
        self.events.push(ev);
    }

    pub const CSV_HEADER: &'static str = "time_ms,kind,subtask,device,quantity";

    pub fn to_csv(&self) -> String {
        let mut out = String::from(Self::CSV_HEADER);
        out.push('\n');
        for e in &self.events {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                e.time_ms, e.kind, e.subtask, e.device, e.quantity
            ));
        }
        out
    }

    pub fn iter(&self) -> impl Iterator<Item = &SimEvent> {
        self.events.iter()
    }
}
