//! Per-interval GPU allocation for ring-architecture jobs.
//!
//! The objective is the sum of predicted completion times
//! `Σ Q_j / f(w_j)` subject to `Σ w_j ≤ C` and `w_j ≥ 1`. Three solvers
//! share it: the doubling heuristic, a one-worker-at-a-time greedy
//! baseline, and an exact dynamic program used as an oracle.

mod placement;

pub use placement::{place_tasks, ClusterConfig, JobPlacement, NodeSlot, Placement, PlacementError};

use std::cmp::Ordering;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::costmodel::{floor_power_of_two, CostModelError, ResourceModel, SpeedModel};

/// Largest instance the exact solver accepts.
pub const DP_MAX_JOBS: usize = 16;
pub const DP_MAX_CAPACITY: u32 = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct JobId(pub u64);

impl fmt::Display for JobId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AllocError {
    #[error("{jobs} jobs cannot each receive a worker with capacity {capacity}")]
    OverCapacity { jobs: usize, capacity: u32 },
    #[error("instance too large for the exact solver: {jobs} jobs, capacity {capacity}")]
    InstanceTooLarge { jobs: usize, capacity: u32 },
    #[error("job {0}: {1}")]
    InvalidJob(JobId, String),
    #[error("job {0}: {1}")]
    Model(JobId, CostModelError),
}

/// A live job as the allocator sees it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobState<M = ResourceModel> {
    pub job_id: JobId,
    /// Remaining epochs `Q`.
    pub remaining_epochs: f64,
    pub model: M,
    /// Workers currently held, 0 when not running.
    #[serde(default)]
    pub current_workers: u32,
    #[serde(default)]
    pub arrival_time: f64,
    /// Allocation cap. `None` means the largest power of two within capacity.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_workers: Option<u32>,
}

impl<M> JobState<M> {
    pub fn new(job_id: JobId, remaining_epochs: f64, model: M) -> Self {
        Self { job_id, remaining_epochs, model, current_workers: 0, arrival_time: 0.0, max_workers: None }
    }

    pub fn worker_cap(&self, capacity: u32) -> u32 {
        self.max_workers.unwrap_or_else(|| floor_power_of_two(capacity)).min(capacity)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanEntry {
    pub job_id: JobId,
    pub workers: u32,
    /// Predicted remaining time `Q / f(w)` in seconds.
    pub predicted_time: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct AllocationPlan {
    pub entries: Vec<PlanEntry>,
    /// `Σ predicted_time`.
    pub objective: f64,
}

impl AllocationPlan {
    pub fn workers(&self, job: JobId) -> Option<u32> {
        self.entries.iter().find(|e| e.job_id == job).map(|e| e.workers)
    }

    pub fn total_workers(&self) -> u32 {
        self.entries.iter().map(|e| e.workers).sum()
    }

    pub fn worker_counts(&self) -> Vec<u32> {
        self.entries.iter().map(|e| e.workers).collect()
    }
}

fn remaining_time<M: SpeedModel>(job: &JobState<M>, w: u32) -> Result<f64, AllocError> {
    if job.remaining_epochs == 0.0 {
        return Ok(0.0);
    }
    let t = job.model.epoch_time(w).map_err(|e| AllocError::Model(job.job_id, e))?;
    Ok(job.remaining_epochs * t)
}

fn validate<M>(jobs: &[JobState<M>], capacity: u32) -> Result<(), AllocError> {
    if jobs.len() > capacity as usize {
        return Err(AllocError::OverCapacity { jobs: jobs.len(), capacity });
    }
    for job in jobs {
        if !(job.remaining_epochs.is_finite() && job.remaining_epochs >= 0.0) {
            return Err(AllocError::InvalidJob(job.job_id, format!("remaining epochs {}", job.remaining_epochs)));
        }
        if job.max_workers == Some(0) {
            return Err(AllocError::InvalidJob(job.job_id, "max_workers is 0".into()));
        }
    }
    Ok(())
}

/// Builds a plan from worker counts, evaluating each job's predicted time.
pub fn plan_from_counts<M: SpeedModel>(jobs: &[JobState<M>], workers: &[u32]) -> Result<AllocationPlan, AllocError> {
    let mut entries = Vec::with_capacity(jobs.len());
    let mut objective = 0.0;
    for (job, &w) in jobs.iter().zip(workers) {
        let predicted_time = remaining_time(job, w)?;
        objective += predicted_time;
        entries.push(PlanEntry { job_id: job.job_id, workers: w, predicted_time });
    }
    Ok(AllocationPlan { entries, objective })
}

struct Candidate {
    index: usize,
    gain: f64,
}

/// Larger gain wins; ties go to the earlier arrival, then the smaller id.
fn better<M>(jobs: &[JobState<M>], a: &Candidate, b: &Candidate) -> bool {
    match a.gain.total_cmp(&b.gain) {
        Ordering::Greater => true,
        Ordering::Less => false,
        Ordering::Equal => {
            let (ja, jb) = (&jobs[a.index], &jobs[b.index]);
            match ja.arrival_time.total_cmp(&jb.arrival_time) {
                Ordering::Less => true,
                Ordering::Greater => false,
                Ordering::Equal => ja.job_id < jb.job_id,
            }
        }
    }
}

/// Shared incremental loop: repeatedly applies the best positive-gain
/// step until none is feasible. `step(w)` is the size after growing.
fn grow<M: SpeedModel>(
    jobs: &[JobState<M>],
    capacity: u32,
    caps: &[u32],
    mut workers: Vec<u32>,
    step: impl Fn(u32) -> u32,
) -> Result<Vec<u32>, AllocError> {
    let mut used: u32 = workers.iter().sum();
    // gain[i] = per-worker reduction in predicted time of job i's next step
    let gain_of = |i: usize, w: u32| -> Result<Option<f64>, AllocError> {
        let next = step(w);
        if next > caps[i] {
            return Ok(None);
        }
        let added = (next - w) as f64;
        let g = (remaining_time(&jobs[i], w)? - remaining_time(&jobs[i], next)?) / added;
        Ok(Some(g))
    };
    let mut gains: Vec<Option<f64>> =
        workers.iter().enumerate().map(|(i, &w)| gain_of(i, w)).collect::<Result<_, _>>()?;

    loop {
        let free = capacity - used;
        let mut best: Option<Candidate> = None;
        for (i, gain) in gains.iter().enumerate() {
            let Some(gain) = *gain else { continue };
            if !(gain > 0.0) || step(workers[i]) - workers[i] > free {
                continue;
            }
            let cand = Candidate { index: i, gain };
            if best.as_ref().is_none_or(|b| better(jobs, &cand, b)) {
                best = Some(cand);
            }
        }
        let Some(best) = best else { break };
        let i = best.index;
        let next = step(workers[i]);
        used += next - workers[i];
        workers[i] = next;
        gains[i] = gain_of(i, next)?;
    }
    Ok(workers)
}

/// Doubling heuristic starting from explicit per-job floors instead of one
/// worker each. Used when running jobs may only grow.
pub fn doubling_allocate_from<M: SpeedModel>(
    jobs: &[JobState<M>],
    capacity: u32,
    floors: &[u32],
) -> Result<AllocationPlan, AllocError> {
    validate(jobs, capacity)?;
    assert_eq!(jobs.len(), floors.len(), "one floor per job");
    let start: Vec<u32> = floors.iter().map(|&f| f.max(1)).collect();
    if start.iter().sum::<u32>() > capacity {
        return Err(AllocError::OverCapacity { jobs: jobs.len(), capacity });
    }
    let caps: Vec<u32> = jobs.iter().map(|j| j.worker_cap(capacity)).collect();
    let workers = grow(jobs, capacity, &caps, start, |w| 2 * w)?;
    plan_from_counts(jobs, &workers)
}

/// Gives every job one worker, then repeatedly doubles the job with the
/// largest per-added-worker gain `(Q/f(w) − Q/f(2w)) / w` while the full
/// doubling fits in the remaining capacity and under the job's cap.
pub fn doubling_allocate<M: SpeedModel>(jobs: &[JobState<M>], capacity: u32) -> Result<AllocationPlan, AllocError> {
    doubling_allocate_from(jobs, capacity, &vec![1; jobs.len()])
}

/// One worker per job, then one extra worker at a time to the job with
/// the largest marginal gain `Q/f(w) − Q/f(w+1)`. Without an explicit
/// cap a job may take the whole cluster.
pub fn greedy_allocate<M: SpeedModel>(jobs: &[JobState<M>], capacity: u32) -> Result<AllocationPlan, AllocError> {
    validate(jobs, capacity)?;
    let caps: Vec<u32> = jobs.iter().map(|j| j.max_workers.unwrap_or(capacity).min(capacity)).collect();
    let workers = grow(jobs, capacity, &caps, vec![1; jobs.len()], |w| w + 1)?;
    plan_from_counts(jobs, &workers)
}

/// Exact minimum of the allocation problem by dynamic programming over
/// (job suffix, capacity left). Among equal objectives earlier jobs get
/// the smaller allocation.
pub fn optimal_allocate_dp<M: SpeedModel>(
    jobs: &[JobState<M>],
    capacity: u32,
    power_of_two_only: bool,
) -> Result<AllocationPlan, AllocError> {
    if jobs.len() > DP_MAX_JOBS || capacity > DP_MAX_CAPACITY {
        return Err(AllocError::InstanceTooLarge { jobs: jobs.len(), capacity });
    }
    validate(jobs, capacity)?;
    let n = jobs.len();
    let c = capacity as usize;

    // Allowed (w, cost) per job.
    let mut options: Vec<Vec<(u32, f64)>> = Vec::with_capacity(n);
    for job in jobs {
        let cap = if power_of_two_only {
            job.worker_cap(capacity)
        } else {
            job.max_workers.unwrap_or(capacity).min(capacity)
        };
        let mut opts = Vec::new();
        for w in 1..=cap {
            if !power_of_two_only || w.is_power_of_two() {
                opts.push((w, remaining_time(job, w)?));
            }
        }
        options.push(opts);
    }

    // best[i][r]: minimum cost of jobs i.. using at most r workers.
    let mut best = vec![vec![f64::INFINITY; c + 1]; n + 1];
    let mut choice = vec![vec![0u32; c + 1]; n];
    best[n].iter_mut().for_each(|v| *v = 0.0);
    for i in (0..n).rev() {
        for r in 0..=c {
            for &(w, cost) in &options[i] {
                let w_us = w as usize;
                if w_us > r {
                    break;
                }
                let total = cost + best[i + 1][r - w_us];
                if total < best[i][r] {
                    best[i][r] = total;
                    choice[i][r] = w;
                }
            }
        }
    }
    if !best[0][c].is_finite() {
        return Err(AllocError::OverCapacity { jobs: n, capacity });
    }
    let mut workers = Vec::with_capacity(n);
    let mut r = c;
    for row in &choice {
        let w = row[r];
        workers.push(w);
        r -= w as usize;
    }
    plan_from_counts(jobs, &workers)
}
