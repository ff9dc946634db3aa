use serde::{Deserialize, Serialize};

use super::Strategy;
use crate::allocator::JobId;

/// One change of a job's worker count.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Reallocation {
    pub time: f64,
    /// Workers actually training.
    pub workers: u32,
    /// GPUs reserved, which exceeds `workers` while a job explores.
    pub held: u32,
    pub lr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobRecord {
    pub job_id: JobId,
    pub arrival: f64,
    pub start: f64,
    pub completion: f64,
    pub restarts: u32,
    pub paused_seconds: f64,
    pub gpu_seconds: f64,
    pub epochs: f64,
    pub final_workers: u32,
    pub final_lr: f64,
    pub reallocations: Vec<Reallocation>,
}

impl JobRecord {
    pub fn completion_seconds(&self) -> f64 {
        self.completion - self.arrival
    }

    pub fn queueing_seconds(&self) -> f64 {
        self.start - self.arrival
    }
}

/// Allocation checked after every event.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CapacityAudit {
    pub capacity: u32,
    pub checks: u64,
    pub max_allocated: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimReport {
    pub strategy: Strategy,
    pub total_jobs: usize,
    pub mean_completion_hours: f64,
    pub peak_concurrent_jobs: usize,
    pub makespan: f64,
    pub total_restarts: u64,
    pub total_gpu_seconds: f64,
    pub audit: CapacityAudit,
    pub jobs: Vec<JobRecord>,
}

impl SimReport {
    pub fn new(strategy: Strategy, jobs: Vec<JobRecord>, peak_concurrent_jobs: usize, audit: CapacityAudit) -> Self {
        let n = jobs.len();
        let mean = jobs.iter().map(JobRecord::completion_seconds).sum::<f64>() / n.max(1) as f64;
        Self {
            strategy,
            total_jobs: n,
            mean_completion_hours: mean / 3600.0,
            peak_concurrent_jobs,
            makespan: jobs.iter().map(|j| j.completion).fold(0.0, f64::max),
            total_restarts: jobs.iter().map(|j| j.restarts as u64).sum(),
            total_gpu_seconds: jobs.iter().map(|j| j.gpu_seconds).sum(),
            audit,
            jobs,
        }
    }

    pub fn job(&self, id: JobId) -> Option<&JobRecord> {
        self.jobs.iter().find(|j| j.job_id == id)
    }
}
