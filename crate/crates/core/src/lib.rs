//! Scheduling for data-parallel training jobs that synchronize gradients
//! with ring all-reduce.
//!
//! - [`costmodel`]: all-reduce and step-time cost model, speed models.
//! - [`fitting`]: non-negative least-squares fits of loss curves and speed.
//! - [`allocator`]: doubling heuristic, greedy and exact baselines, placement.
//! - [`simulator`]: seeded discrete-event cluster simulation.
//! - [`workload`]: calibrated job profiles and synthetic workloads.
//! - [`experiment`]: multi-seed strategy comparisons.
//! - [`formats`]: versioned file formats.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod allocator;
pub mod costmodel;
pub mod experiment;
pub mod fitting;
pub mod formats;
pub mod nnls;
pub mod simulator;
pub mod workload;

pub use allocator::{doubling_allocate, greedy_allocate, optimal_allocate_dp, AllocationPlan, JobId, JobState};
pub use costmodel::{allreduce_time, step_time, AllReduceAlgo, CommParams, JobProfile, ResourceModel, SpeedModel};
pub use fitting::{fit_loss_curve, fit_resource_model, LossCurveModel, LossPoint, SpeedSample};
pub use simulator::{run_simulation, SimConfig, SimReport, Strategy};
