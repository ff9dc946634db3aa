use proptest::prelude::*;
use ringsched::allocator::ClusterConfig;
use ringsched::experiment::standard_config;
use ringsched::formats::{load_trace, save_trace};
use ringsched::simulator::{run_simulation, SimConfig, Strategy as Sched};
use ringsched::workload::{generate_workload, WorkloadSpec};

#[test]
fn trace_file_drives_identical_simulation() {
    let workload = generate_workload(&WorkloadSpec::calibrated(15, 400.0, 21)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("jobs.jsonl");
    save_trace(&path, &workload).unwrap();
    let loaded = load_trace(&path).unwrap();
    let config = standard_config(Sched::Exploratory, 21);
    let a = run_simulation(&config, &workload).unwrap();
    let b = run_simulation(&config, &loaded).unwrap();
    assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
}

#[test]
fn unloaded_cluster_matches_fixed_eight_baseline() {
    // One job at a time: Fixed(8) completion is the 8-GPU training time
    // plus the wait for the next tick.
    let workload = generate_workload(&WorkloadSpec::calibrated(5, 1e6, 4)).unwrap();
    let report = run_simulation(&standard_config(Sched::Fixed(8), 4), &workload).unwrap();
    for (job, rec) in workload.jobs.iter().zip(&report.jobs) {
        let speed = ringsched::costmodel::ProfileSpeed::new(job.profile.clone());
        let run = job.true_epochs / ringsched::costmodel::SpeedModel::speed(&speed, 8).unwrap();
        let wait = rec.start - rec.arrival;
        assert!((0.0..60.0).contains(&wait));
        assert!((rec.completion_seconds() - wait - run).abs() < 1e-6);
    }
}

fn strategy() -> impl Strategy<Value = Sched> {
    prop_oneof![
        Just(Sched::Precompute),
        Just(Sched::Exploratory),
        (0u32..4).prop_map(|e| Sched::Fixed(1 << e)),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn simulation_invariants(
        s in strategy(),
        jobs in 1usize..25,
        mean in 100.0..2000.0f64,
        seed in any::<u64>(),
        nodes in 1u32..=4,
        shrink in any::<bool>(),
        reclaim in any::<bool>(),
    ) {
        let workload = generate_workload(&WorkloadSpec::calibrated(jobs, mean, seed)).unwrap();
        let mut config = SimConfig::new(ClusterConfig::new(nodes, 8).unwrap(), s, seed);
        config.max_workers = Some(8);
        config.allow_shrink = shrink;
        config.reclaim_for_admission = reclaim;
        let r = run_simulation(&config, &workload).unwrap();
        let capacity = nodes * 8;
        prop_assert!(r.audit.max_allocated <= capacity);
        prop_assert!(r.total_gpu_seconds <= capacity as f64 * r.makespan * (1.0 + 1e-12));
        for (job, rec) in workload.jobs.iter().zip(&r.jobs) {
            prop_assert!(rec.completion >= rec.arrival);
            prop_assert!(rec.start >= rec.arrival);
            // Progress is never lost across restarts.
            prop_assert!((rec.epochs - job.true_epochs).abs() < 1e-9);
            // Restarts that overlap an earlier pause extend it rather than stack.
            prop_assert!(rec.paused_seconds <= rec.restarts as f64 * config.restart_cost + 1e-6);
            let lr = rec.reallocations.iter().fold(job.profile.base_lr, |_, a| a.lr);
            prop_assert_eq!(lr, rec.final_lr);
            let w = rec.final_workers as f64;
            prop_assert!((rec.final_lr - job.profile.base_lr * w).abs() <= 1e-12 * w * 8.0);
        }
    }
}
