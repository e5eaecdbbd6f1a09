use serde::{Deserialize, Serialize};

/// Smoothing window for reported losses (trailing moving average).
pub const SMOOTH_WINDOW: usize = 5;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EpisodeRow {
    pub episode: usize,
    /// Mean squared TD error over the episode's updates.
    pub td_loss: f64,
    /// Trailing moving average of `td_loss`.
    pub smoothed_loss: f64,
    /// Absolute deviation of the episode's mean reward from the running
    /// mean of earlier episodes' rewards.
    pub paper_loss: f64,
    pub mean_reward: f64,
    pub makespan_min_ms: f64,
    pub makespan_median_ms: f64,
    pub makespan_max_ms: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainLog {
    pub policy: String,
    pub seed: u64,
    pub rows: Vec<EpisodeRow>,
    /// Masked actions emitted across all training episodes (must stay 0).
    pub masked_emissions: u64,
}

impl TrainLog {
    pub fn new(policy: &str, seed: u64) -> Self {
        TrainLog {
            policy: policy.to_string(),
            seed,
            rows: Vec::new(),
            masked_emissions: 0,
        }
    }

    /// Append an episode, deriving the smoothed and paper-style losses.
    pub fn push(
        &mut self,
        episode: usize,
        td_loss: f64,
        mean_reward: f64,
        mut makespans: Vec<f64>,
    ) {
        let start = self.rows.len().saturating_sub(SMOOTH_WINDOW - 1);
        let prior: f64 = self.rows[start..].iter().map(|r| r.td_loss).sum();
        let count = self.rows.len() - start + 1;
        let smoothed = (prior + td_loss) / count as f64;
        let reward_hist_mean = if self.rows.is_empty() {
            mean_reward
        } else {
            self.rows.iter().map(|r| r.mean_reward).sum::<f64>() / self.rows.len() as f64
        };
        makespans.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
        let (min, median, max) = if makespans.is_empty() {
            (0.0, 0.0, 0.0)
        } else {
            (
                makespans[0],
                makespans[makespans.len() / 2],
                makespans[makespans.len() - 1],
            )
        };
        self.rows.push(EpisodeRow {
            episode,
            td_loss,
            smoothed_loss: smoothed,
            paper_loss: (mean_reward - reward_hist_mean).abs(),
            mean_reward,
            makespan_min_ms: min,
            makespan_median_ms: median,
            makespan_max_ms: max,
        });
    }

    pub fn smoothed_at(&self, episode: usize) -> Option<f64> {
        self.rows
            .iter()
            .find(|r| r.episode == episode)
            .map(|r| r.smoothed_loss)
    }

    pub const CSV_HEADER: &'static str = "episode,td_loss,smoothed_loss,paper_loss,mean_reward,makespan_min_ms,makespan_median_ms,makespan_max_ms";

    pub fn to_csv(&self) -> String {
        let mut out = String::from(Self::CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{}\n",
                r.episode,
                r.td_loss,
                r.smoothed_loss,
                r.paper_loss,
                r.mean_reward,
                r.makespan_min_ms,
                r.makespan_median_ms,
                r.makespan_max_ms
            ));
        }
        out
    }

    pub fn parse_csv(policy: &str, seed: u64, text: &str) -> Option<Self> {
        let mut rows = Vec::new();
        for line in text.lines().skip(1) {
            if line.trim().is_empty() {
                continue;
            }
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 8 {
                return None;
            }
            rows.push(EpisodeRow {
                episode: f[0].parse().ok()?,
                td_loss: f[1].parse().ok()?,
                smoothed_loss: f[2].parse().ok()?,
                paper_loss: f[3].parse().ok()?,
                mean_reward: f[4].parse().ok()?,
                makespan_min_ms: f[5].parse().ok()?,
                makespan_median_ms: f[6].parse().ok()?,
                makespan_max_ms: f[7].parse().ok()?,
            });
        }
        Some(TrainLog {
            policy: policy.to_string(),
            seed,
            rows,
            masked_emissions: 0,
        })
    }
}
