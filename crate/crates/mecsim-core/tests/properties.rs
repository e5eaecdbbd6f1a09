//! Property tests over the workload, priority and metric kernels.

use mecsim_core::metrics::{power_for_rate, transmission_rate, DeviceKind, DeviceProfile};
use mecsim_core::priority::{factor_weights, priority_vector, task_weight_matrix, ComparisonMatrix, TaskFactors};
use mecsim_core::workload::{
    generate_synthetic, parse_trace, serialize_trace, topological_order, validate_dag, Range,
    WorkloadConfig,
};
use proptest::prelude::*;

fn workload_cfg_strategy() -> impl Strategy<Value = WorkloadConfig> {
    (
        1usize..20,
        1usize..6,
        0usize..6,
        0.0f64..1.0,
        any::<u64>(),
        1usize..4,
    )
        .prop_map(|(n_jobs, k_min, k_extra, density, seed, origins)| WorkloadConfig {
            n_jobs,
            subtasks_min: k_min,
            subtasks_max: k_min + k_extra,
            edge_density: density,
            data_in_bits: Range::new(1e4, 1e6),
            data_out_bits: Range::new(0.0, 1e5),
            cpu_cycles: Range::new(1e6, 1e9),
            deadline_ms: Range::new(10.0, 500.0),
            submit_window_ms: 100.0,
            n_origin_devices: origins,
            seed,
        })
}

proptest! {
    #[test]
    fn trace_round_trips(cfg in workload_cfg_strategy()) {
        let jobs = generate_synthetic(&cfg).unwrap();
        let text = serialize_trace(&jobs);
        let parsed = parse_trace(&text).unwrap();
        prop_assert_eq!(&jobs, &parsed);
        prop_assert_eq!(serialize_trace(&parsed), text);
    }

    #[test]
    fn generated_workloads_are_valid_dags(cfg in workload_cfg_strategy()) {
        for job in generate_synthetic(&cfg).unwrap() {
            prop_assert!(validate_dag(&job).is_ok());
            let order = topological_order(&job).unwrap();
            prop_assert_eq!(order.len(), job.subtasks.len());
        }
    }

    #[test]
    fn rate_power_round_trip_within_1e9(p in 1e-6f64..1.0) {
        let profile = DeviceProfile {
            kind: DeviceKind::Mobile,
            p_full_watts: 4.0,
            k_ratio: 0.5,
            proc_rate_cycles_per_s: 1e9,
            channel_gain: 1e-5,
            noise_watts: 1e-13,
            interference_watts: 0.0,
            bandwidth_hz: 1e6,
            tx_power_watts: 0.1,
            cpu_capacity_cycles_per_s: 1e9,
            mem_bytes: 1e9,
        };
        let r = transmission_rate(p, &profile);
        let back = power_for_rate(r, &profile);
        prop_assert!((back - p).abs() <= 1e-9 * p);
    }

    #[test]
    fn priorities_sum_to_one(
        seeds in prop::collection::vec((10.0f64..500.0, 1e6f64..1e9, 0.0f64..1e6), 1..12)
    ) {
        let factors: Vec<TaskFactors> = seeds
            .iter()
            .map(|&(d, c, b)| TaskFactors { deadline_ms: d, cpu_cycles: c, data_bits: b })
            .collect();
        let delta = task_weight_matrix(&factors).unwrap();
        let lambda = factor_weights(&ComparisonMatrix::default_factors());
        let pv = priority_vector(delta, lambda).unwrap();
        let sum: f64 = pv.priorities.iter().sum();
        prop_assert!((sum - 1.0).abs() < 1e-9);
        prop_assert!(pv.priorities.iter().all(|&p| p >= 0.0));
    }
}
