use crate::priority::{self, TaskFactors};

/// Priority-ordered message queue of one edge region. Priorities are
/// recomputed over the queue snapshot on every enqueue so the order always
/// matches the comparator.
#[derive(Debug, Clone)]
pub struct MessageQueue {
    pub region: usize,
    entries: Vec<QueueEntry>,
}

#[derive(Debug, Clone)]
pub struct QueueEntry {
    pub task: usize,
    pub pv: f64,
    pub submit_ms: f64,
    pub sort_key: String,
    pub factors: TaskFactors,
}

impl MessageQueue {
    pub fn new(region: usize) -> Self {
        MessageQueue {
            region,
            entries: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[QueueEntry] {
        &self.entries
    }

    /// Insert a task and rebuild the snapshot priorities.
    pub fn enqueue(
        &mut self,
        task: usize,
        factors: TaskFactors,
        submit_ms: f64,
        sort_key: String,
        lambda: [f64; 3],
    ) {
        self.entries.push(QueueEntry {
            task,
            pv: 0.0,
            submit_ms,
            sort_key,
            factors,
        });
        self.recompute(lambda);
    }

    pub fn remove(&mut self, task: usize) -> Option<QueueEntry> {
        let pos = self.entries.iter().position(|e| e.task == task)?;
        Some(self.entries.remove(pos))
    }

    fn recompute(&mut self, lambda: [f64; 3]) {
        let factors: Vec<TaskFactors> = self.entries.iter().map(|e| e.factors).collect();
        let delta = priority::task_weight_matrix(&factors).expect("queue not empty");
        let pv = priority::priority_vector(delta, lambda).expect("shapes agree");
        for (entry, p) in self.entries.iter_mut().zip(pv.priorities) {
            entry.pv = p;
        }
        self.entries.sort_by(|a, b| {
            priority::queue_order(
                (a.pv, a.submit_ms, a.sort_key.as_str()),
                (b.pv, b.submit_ms, b.sort_key.as_str()),
            )
        });
    }
}
