//! AHP-based task priorities.
//!
//! Three scheduling factors are compared pairwise (deadline, CPU cycles,
//! data size) to produce factor weights; per-task weights per factor come
//! from row-sum-normalized ratio matrices; the final priority of a task is
//! the factor-weighted sum of its per-factor weights.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::workload::Subtask;

pub const FACTORS: usize = 3; // deadline, cpu cycles, data size

#[derive(Debug, thiserror::Error)]
pub enum PriorityError {
    #[error("comparison matrix is not reciprocal at ({i},{j}): {a} vs {b}")]
    NotReciprocal { i: usize, j: usize, a: f64, b: f64 },
    #[error("comparison matrix diagonal entry ({i},{i}) must be 1, got {a}")]
    BadDiagonal { i: usize, a: f64 },
    #[error("comparison matrix entry ({i},{j})={a} is not on the 1..9 scale or a reciprocal")]
    OffScale { i: usize, j: usize, a: f64 },
    #[error("empty task list")]
    EmptyTasks,
    #[error("shape mismatch: weight matrix has {cols} tasks, factor vector has {lambda} entries")]
    ShapeMismatch { cols: usize, lambda: usize },
}

/// Pairwise factor comparison matrix on the 1..9 importance scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComparisonMatrix {
    entries: [[f64; FACTORS]; FACTORS],
}

impl ComparisonMatrix {
    pub fn new(entries: [[f64; FACTORS]; FACTORS]) -> Result<Self, PriorityError> {
        for i in 0..FACTORS {
            if (entries[i][i] - 1.0).abs() > 1e-12 {
                return Err(PriorityError::BadDiagonal { i, a: entries[i][i] });
            }
            for j in 0..FACTORS {
                let a = entries[i][j];
                if !on_saaty_scale(a) {
                    return Err(PriorityError::OffScale { i, j, a });
                }
                let recip = entries[j][i];
                if (a * recip - 1.0).abs() > 1e-12 {
                    return Err(PriorityError::NotReciprocal { i, j, a, b: recip });
                }
            }
        }
        Ok(ComparisonMatrix { entries })
    }

    /// Default ordering <Deadline, CPU Cycle, Data Size>: deadline weakly
    /// stronger than cycles (3), stronger than data (5); cycles weakly
    /// stronger than data (3).
    pub fn default_factors() -> Self {
        ComparisonMatrix::new([
            [1.0, 3.0, 5.0],
            [1.0 / 3.0, 1.0, 3.0],
            [1.0 / 5.0, 1.0 / 3.0, 1.0],
        ])
        .expect("default matrix is valid")
    }

    pub fn entries(&self) -> &[[f64; FACTORS]; FACTORS] {
        &self.entries
    }
}

fn on_saaty_scale(a: f64) -> bool {
    if !(a > 0.0) || !a.is_finite() {
        return false;
    }
    (1..=9).any(|k| {
        let k = k as f64;
        (a - k).abs() <= 1e-9 * k || (a - 1.0 / k).abs() <= 1e-9 / k
    })
}

/// Principal eigenvector of the comparison matrix by power iteration,
/// normalized to sum one. Iterates until the relative change drops below
/// 1e-10.
pub fn factor_weights(a: &ComparisonMatrix) -> [f64; FACTORS] {
    let m = a.entries();
    let mut v = [1.0 / FACTORS as f64; FACTORS];
    for _ in 0..10_000 {
        let mut next = [0.0; FACTORS];
        for i in 0..FACTORS {
            for j in 0..FACTORS {
                next[i] += m[i][j] * v[j];
            }
        }
        let sum: f64 = next.iter().sum();
        for x in &mut next {
            *x /= sum;
        }
        let rel = (0..FACTORS)
            .map(|i| (next[i] - v[i]).abs() / v[i].max(1e-300))
            .fold(0.0, f64::max);
        v = next;
        if rel < 1e-10 {
            break;
        }
    }
    v
}

/// Raw factor values of one task as used by the ratio construction.
#[derive(Debug, Clone, Copy)]
pub struct TaskFactors {
    pub deadline_ms: f64,
    pub cpu_cycles: f64,
    pub data_bits: f64,
}

impl From<&Subtask> for TaskFactors {
    fn from(s: &Subtask) -> Self {
        TaskFactors {
            deadline_ms: s.deadline_ms,
            cpu_cycles: s.cpu_cycles,
            data_bits: s.data_in_bits + s.data_out_bits,
        }
    }
}

/// Per-factor per-task weight matrix, rows indexed by factor. Every row
/// sums to one.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskWeightMatrix {
    pub rows: [Vec<f64>; FACTORS],
}

impl TaskWeightMatrix {
    pub fn task_count(&self) -> usize {
        self.rows[0].len()
    }
}

/// Build the 3 x J task weight matrix. For each factor a J x J matrix of
/// urgency ratios is formed (smaller deadline means larger ratio; larger
/// cycle or data demand means larger ratio) and each task's weight is its
/// row sum over the total sum, so every factor row is normalized and ratios
/// are invariant under common positive rescaling of the raw values.
pub fn task_weight_matrix(tasks: &[TaskFactors]) -> Result<TaskWeightMatrix, PriorityError> {
    if tasks.is_empty() {
        return Err(PriorityError::EmptyTasks);
    }
    const EPS: f64 = 1e-12;
    let raw = |k: usize, t: &TaskFactors| -> f64 {
        match k {
            0 => t.deadline_ms.max(EPS),
            1 => t.cpu_cycles.max(EPS),
            _ => t.data_bits.max(EPS),
        }
    };
    let mut rows: [Vec<f64>; FACTORS] = [Vec::new(), Vec::new(), Vec::new()];
    for k in 0..FACTORS {
        let j = tasks.len();
        let mut row_sums = vec![0.0; j];
        let mut total = 0.0;
        for r in 0..j {
            for c in 0..j {
                // Deadline urgency grows as the deadline shrinks; demand
                // urgency grows with the demand.
                let ratio = if k == 0 {
                    raw(k, &tasks[c]) / raw(k, &tasks[r])
                } else {
                    raw(k, &tasks[r]) / raw(k, &tasks[c])
                };
                row_sums[r] += ratio;
                total += ratio;
            }
        }
        rows[k] = row_sums.iter().map(|s| s / total).collect();
    }
    Ok(TaskWeightMatrix { rows })
}

/// Scalar priorities per task plus the inputs that produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct PriorityVector {
    pub priorities: Vec<f64>,
    pub lambda: [f64; FACTORS],
    pub delta: TaskWeightMatrix,
}

/// PV_r = sum_k Delta[k][r] * Lambda[k].
pub fn priority_vector(
    delta: TaskWeightMatrix,
    lambda: [f64; FACTORS],
) -> Result<PriorityVector, PriorityError> {
    let j = delta.task_count();
    for row in &delta.rows {
        if row.len() != j {
            return Err(PriorityError::ShapeMismatch {
                cols: row.len(),
                lambda: FACTORS,
            });
        }
    }
    let mut priorities = vec![0.0; j];
    for (r, pv) in priorities.iter_mut().enumerate() {
        for k in 0..FACTORS {
            *pv += delta.rows[k][r] * lambda[k];
        }
    }
    Ok(PriorityVector {
        priorities,
        lambda,
        delta,
    })
}

/// Total queue order: priority descending, then submit time ascending, then
/// task id ascending.
pub fn queue_order(
    (pv_a, submit_a, id_a): (f64, f64, &str),
    (pv_b, submit_b, id_b): (f64, f64, &str),
) -> Ordering {
    pv_b.partial_cmp(&pv_a)
        .unwrap_or(Ordering::Equal)
        .then_with(|| submit_a.partial_cmp(&submit_b).unwrap_or(Ordering::Equal))
        .then_with(|| id_a.cmp(id_b))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tf(deadline: f64, cycles: f64, data: f64) -> TaskFactors {
        TaskFactors {
            deadline_ms: deadline,
            cpu_cycles: cycles,
            data_bits: data,
        }
    }

    /// Independent power-iteration oracle: apply the matrix 200 times to a
    /// fixed start vector without any convergence logic.
    fn eigen_oracle(m: &[[f64; 3]; 3]) -> [f64; 3] {
        let mut v = [1.0, 1.0, 1.0];
        for _ in 0..200 {
            let mut next = [0.0; 3];
            for i in 0..3 {
                for j in 0..3 {
                    next[i] += m[i][j] * v[j];
                }
            }
            let s: f64 = next.iter().sum();
            v = [next[0] / s, next[1] / s, next[2] / s];
        }
        v
    }

    #[test]
    fn consistent_matrix_recovers_construction_weights() {
        let a = ComparisonMatrix::new([
            [1.0, 3.0, 3.0],
            [1.0 / 3.0, 1.0, 1.0],
            [1.0 / 3.0, 1.0, 1.0],
        ])
        .unwrap();
        let w = factor_weights(&a);
        let oracle = eigen_oracle(a.entries());
        for i in 0..3 {
            assert!((w[i] - oracle[i]).abs() < 1e-10);
        }
        assert!((w[0] - 0.6).abs() < 1e-9);
        assert!((w[1] - 0.2).abs() < 1e-9);
        assert!((w[2] - 0.2).abs() < 1e-9);
    }

    #[test]
    fn all_ones_matrix_gives_uniform_weights() {
        let a = ComparisonMatrix::new([[1.0; 3]; 3]).unwrap();
        let w = factor_weights(&a);
        for x in w {
            assert!((x - 1.0 / 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn default_matrix_ranks_deadline_highest() {
        let w = factor_weights(&ComparisonMatrix::default_factors());
        assert!(w[0] > w[1] && w[0] > w[2]);
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn non_reciprocal_matrix_is_rejected() {
        let err = ComparisonMatrix::new([[1.0, 3.0, 5.0], [0.5, 1.0, 3.0], [0.2, 1.0 / 3.0, 1.0]]);
        assert!(matches!(err, Err(PriorityError::NotReciprocal { .. })));
    }

    #[test]
    fn single_task_takes_full_weight() {
        let d = task_weight_matrix(&[tf(10.0, 1e8, 1e5)]).unwrap();
        for k in 0..3 {
            assert!((d.rows[k][0] - 1.0).abs() < 1e-12);
        }
        let pv = priority_vector(d, [0.6, 0.2, 0.2]).unwrap();
        assert!((pv.priorities[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn identical_tasks_split_evenly() {
        let t = tf(10.0, 1e8, 1e5);
        let d = task_weight_matrix(&[t, t]).unwrap();
        for k in 0..3 {
            assert!((d.rows[k][0] - 0.5).abs() < 1e-12);
            assert!((d.rows[k][1] - 0.5).abs() < 1e-12);
        }
    }

    /// Brute-force evaluation of the ratio construction, written without the
    /// row-sum shortcut.
    fn deadline_weight_oracle(deadlines: &[f64]) -> Vec<f64> {
        let j = deadlines.len();
        let mut m = vec![vec![0.0; j]; j];
        for r in 0..j {
            for c in 0..j {
                m[r][c] = deadlines[c] / deadlines[r];
            }
        }
        let total: f64 = m.iter().flatten().sum();
        (0..j).map(|r| m[r].iter().sum::<f64>() / total).collect()
    }

    #[test]
    fn deadline_weights_decrease_with_deadline() {
        let tasks = [tf(10.0, 1e8, 1e5), tf(20.0, 1e8, 1e5), tf(40.0, 1e8, 1e5)];
        let d = task_weight_matrix(&tasks).unwrap();
        let oracle = deadline_weight_oracle(&[10.0, 20.0, 40.0]);
        for r in 0..3 {
            assert!((d.rows[0][r] - oracle[r]).abs() < 1e-12);
        }
        assert!(d.rows[0][0] > d.rows[0][1] && d.rows[0][1] > d.rows[0][2]);
    }

    #[test]
    fn basis_lambda_selects_deadline_row() {
        let tasks = [tf(10.0, 1e8, 1e5), tf(20.0, 2e8, 3e5), tf(40.0, 3e8, 2e5)];
        let d = task_weight_matrix(&tasks).unwrap();
        let expected = d.rows[0].clone();
        let pv = priority_vector(d, [1.0, 0.0, 0.0]).unwrap();
        for r in 0..3 {
            assert!((pv.priorities[r] - expected[r]).abs() < 1e-12);
        }
    }

    #[test]
    fn priority_matches_hand_weighted_sum() {
        let tasks = [tf(10.0, 1e8, 1e5), tf(20.0, 2e8, 3e5), tf(40.0, 3e8, 2e5)];
        let lambda = [0.6, 0.2, 0.2];
        let d = task_weight_matrix(&tasks).unwrap();
        let hand: Vec<f64> = (0..3)
            .map(|r| 0.6 * d.rows[0][r] + 0.2 * d.rows[1][r] + 0.2 * d.rows[2][r])
            .collect();
        let pv = priority_vector(d, lambda).unwrap();
        for r in 0..3 {
            assert!((pv.priorities[r] - hand[r]).abs() < 1e-12);
        }
        // Task 0 has the tightest deadline and should outrank task 2.
        assert!(pv.priorities[0] > pv.priorities[2]);
    }

    #[test]
    fn priorities_sum_to_one() {
        let tasks = [
            tf(15.0, 1e8, 9e4),
            tf(120.0, 7e7, 5e5),
            tf(60.0, 3e8, 1e5),
            tf(240.0, 9e7, 7e5),
        ];
        let d = task_weight_matrix(&tasks).unwrap();
        let pv = priority_vector(d, factor_weights(&ComparisonMatrix::default_factors())).unwrap();
        assert!((pv.priorities.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn factor_scaling_leaves_weights_unchanged() {
        let tasks = [tf(10.0, 1e8, 1e5), tf(20.0, 2e8, 3e5), tf(40.0, 3e8, 2e5)];
        let scaled: Vec<TaskFactors> = tasks
            .iter()
            .map(|t| tf(t.deadline_ms * 7.5, t.cpu_cycles, t.data_bits))
            .collect();
        let a = task_weight_matrix(&tasks).unwrap();
        let b = task_weight_matrix(&scaled).unwrap();
        for r in 0..3 {
            assert!((a.rows[0][r] - b.rows[0][r]).abs() < 1e-12);
        }
    }

    #[test]
    fn queue_order_is_total_and_deterministic() {
        use std::cmp::Ordering;
        assert_eq!(
            queue_order((0.7, 0.0, "b"), (0.3, 0.0, "a")),
            Ordering::Less
        );
        assert_eq!(
            queue_order((0.5, 1.0, "a"), (0.5, 2.0, "a")),
            Ordering::Less
        );
        assert_eq!(
            queue_order((0.5, 1.0, "a"), (0.5, 1.0, "b")),
            Ordering::Less
        );
        assert_eq!(
            queue_order((0.5, 1.0, "a"), (0.5, 1.0, "a")),
            Ordering::Equal
        );
    }
}
