//! Seeded discrete-event simulation of a shared GPU cluster.
//!
//! Jobs arrive on a Poisson process, wait in a FIFO queue, and are sized
//! at periodic scheduling ticks by a [`Strategy`]. A job whose worker
//! count changes checkpoints and restarts, pausing for `restart_cost`
//! while keeping its GPUs and its accrued epochs. Progress between events
//! accrues at the job's true speed, and a job completes once it has
//! trained its true number of epochs.

mod events;
mod report;
mod strategy;

pub use events::{EventKind, EventQueue, SimEvent};
pub use report::{CapacityAudit, JobRecord, Reallocation, SimReport};
pub use strategy::{Strategy, UnknownStrategy};

use std::collections::VecDeque;

use log::debug;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::allocator::{doubling_allocate_from, AllocError, ClusterConfig, JobId, JobState};
use crate::costmodel::{floor_power_of_two, CostModelError, ProfileSpeed, ResourceModel, SpeedModel, DEFAULT_RING_THRESHOLD};
use crate::fitting::{
    fit_loss_curve, fit_resource_model, remaining_epochs, FitError, LossCurveModel, LossPoint, SpeedSample,
    DEFAULT_CONVERGENCE_MARGIN,
};
use crate::workload::{rescale_learning_rate, Workload, RESTART_COST_SECONDS};

/// Loss points kept per job; older history is thinned to every other point.
const MAX_LOSS_HISTORY: usize = 128;
const MAX_TICKS: u64 = 50_000_000;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid simulation config: {0}")]
    Config(String),
    #[error("workload is empty")]
    EmptyWorkload,
    #[error("allocation failed at t={time}: {source}")]
    Alloc { time: f64, source: AllocError },
    #[error("job {job}: {source}")]
    Model { job: JobId, source: CostModelError },
    #[error("job {job}: fit failed: {source}")]
    Fit { job: JobId, source: FitError },
    #[error("capacity exceeded at t={time}: {allocated} GPUs allocated")]
    CapacityViolation { time: f64, allocated: u32 },
    #[error("simulation stalled after {0} scheduling ticks")]
    Stalled(u64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExploreConfig {
    /// Seconds spent at each width.
    pub window: f64,
    /// Worker counts tried in order; the job reserves the largest.
    pub widths: Vec<u32>,
}

impl Default for ExploreConfig {
    fn default() -> Self {
        Self { window: 150.0, widths: vec![1, 2, 4, 8] }
    }
}

impl ExploreConfig {
    pub fn reservation(&self) -> u32 {
        self.widths.iter().copied().max().unwrap_or(1)
    }

    pub fn duration(&self) -> f64 {
        self.window * self.widths.len() as f64
    }
}

/// Shape of each simulated job's loss curve. The curvature is derived
/// from the job's true epochs so the curve converges exactly then.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossShape {
    pub offset: f64,
    pub floor: f64,
    /// Relative standard deviation of multiplicative observation noise.
    pub noise: f64,
}

impl Default for LossShape {
    fn default() -> Self {
        Self { offset: 1.0, floor: 0.3, noise: 0.0 }
    }
}

/// Resize a running job once it has trained `at_epoch` epochs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForcedRescale {
    pub job_id: JobId,
    pub at_epoch: f64,
    pub workers: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub cluster: ClusterConfig,
    /// Seconds between scheduling ticks.
    pub scheduling_interval: f64,
    /// Seconds a job pauses when its worker count changes.
    pub restart_cost: f64,
    pub strategy: Strategy,
    pub rng_seed: u64,
    /// Workload parameters, echoed for provenance.
    pub mean_interarrival: f64,
    pub total_jobs: usize,
    /// Per-job worker cap; `None` is the largest power of two within capacity.
    pub max_workers: Option<u32>,
    /// Recompute every running job's allocation from one worker each tick.
    pub allow_shrink: bool,
    /// Without `allow_shrink`, still halve running jobs when that is the
    /// only way to admit the head of the queue.
    pub reclaim_for_admission: bool,
    pub convergence_margin: f64,
    pub n_threshold: f64,
    pub explore: ExploreConfig,
    pub loss_shape: LossShape,
    /// Refit a job's loss curve once its history has grown by this fraction.
    pub loss_refit_growth: f64,
    /// Epoch estimate used before a loss curve can be fitted.
    pub prior_epochs: f64,
    #[serde(default)]
    pub forced_rescales: Vec<ForcedRescale>,
}

impl SimConfig {
    pub fn new(cluster: ClusterConfig, strategy: Strategy, rng_seed: u64) -> Self {
        Self {
            cluster,
            scheduling_interval: 60.0,
            restart_cost: RESTART_COST_SECONDS,
            strategy,
            rng_seed,
            mean_interarrival: 0.0,
            total_jobs: 0,
            max_workers: None,
            allow_shrink: false,
            reclaim_for_admission: false,
            convergence_margin: DEFAULT_CONVERGENCE_MARGIN,
            n_threshold: DEFAULT_RING_THRESHOLD,
            explore: ExploreConfig::default(),
            loss_shape: LossShape::default(),
            loss_refit_growth: 0.25,
            prior_epochs: 165.0,
            forced_rescales: Vec::new(),
        }
    }

    pub fn worker_cap(&self) -> u32 {
        self.max_workers.unwrap_or_else(|| floor_power_of_two(self.cluster.capacity)).min(self.cluster.capacity)
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: String| Err(SimError::Config(m));
        self.cluster.validate().map_err(|e| SimError::Config(e.to_string()))?;
        if !(self.scheduling_interval.is_finite() && self.scheduling_interval > 0.0) {
            return bad(format!("scheduling_interval {}", self.scheduling_interval));
        }
        if !(self.restart_cost.is_finite() && self.restart_cost >= 0.0) {
            return bad(format!("restart_cost {}", self.restart_cost));
        }
        if self.max_workers == Some(0) {
            return bad("max_workers is 0".into());
        }
        if !(self.convergence_margin > 0.0 && 1.0 / self.convergence_margin > self.loss_shape.offset) {
            return bad(format!("convergence_margin {}", self.convergence_margin));
        }
        if !(self.loss_shape.offset > 0.0 && self.loss_shape.floor >= 0.0 && self.loss_shape.noise >= 0.0) {
            return bad(format!("loss shape {:?}", self.loss_shape));
        }
        if !(self.prior_epochs > 0.0 && self.loss_refit_growth >= 0.0) {
            return bad("prior_epochs and loss_refit_growth must be positive".into());
        }
        match self.strategy {
            Strategy::Fixed(k) if k == 0 || k > self.cluster.capacity => {
                return bad(format!("fixed request of {k} GPUs on a {}-GPU cluster", self.cluster.capacity));
            }
            Strategy::Exploratory => {
                let e = &self.explore;
                if e.widths.is_empty() || e.widths.contains(&0) || !(e.window > 0.0) {
                    return bad("exploration needs positive widths and window".into());
                }
                if e.reservation() > self.cluster.capacity {
                    return bad(format!("exploration reserves {} GPUs", e.reservation()));
                }
            }
            _ => {}
        }
        for f in &self.forced_rescales {
            if f.workers == 0 || f.workers > self.cluster.capacity {
                return bad(format!("forced rescale of job {} to {} workers", f.job_id, f.workers));
            }
        }
        Ok(())
    }
}

/// Arrival times as cumulative sums of exponential gaps with the given mean.
pub fn generate_arrivals(mean_interarrival: f64, total_jobs: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let gaps = Exp::new(1.0 / mean_interarrival).expect("positive mean");
    let mut t = 0.0;
    (0..total_jobs)
        .map(|_| {
            t += gaps.sample(&mut rng);
            t
        })
        .collect()
}

/// Worker count an exploring job uses at `age` seconds since it started,
/// or `None` once exploration is over and the allocator takes over.
pub fn explore_phase_schedule(explore: &ExploreConfig, age: f64) -> Option<u32> {
    if age < 0.0 {
        return None;
    }
    let window = (age / explore.window).floor() as usize;
    explore.widths.get(window).copied()
}

/// Speed model the scheduler plans with.
#[derive(Debug, Clone, Copy)]
enum View<'a> {
    True(&'a ProfileSpeed),
    Fitted(ResourceModel),
}

impl SpeedModel for View<'_> {
    fn speed(&self, w: u32) -> Result<f64, CostModelError> {
        match self {
            View::True(p) => p.speed(w),
            View::Fitted(m) => m.speed(w),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Phase {
    Pending,
    Queued,
    Exploring { window: usize, active_time_at_start: f64, accrued_at_start: f64 },
    Running,
    Done,
}

#[derive(Debug)]
struct SimJob {
    id: JobId,
    arrival: f64,
    true_epochs: f64,
    steps_per_epoch: f64,
    truth: ProfileSpeed,
    true_loss: LossCurveModel,
    phase: Phase,
    held: u32,
    active: u32,
    rate: f64,
    accrued: f64,
    active_time: f64,
    paused_until: f64,
    paused_total: f64,
    start: Option<f64>,
    completion: Option<f64>,
    restarts: u32,
    gpu_seconds: f64,
    base_lr: f64,
    lr: f64,
    reallocations: Vec<Reallocation>,
    generation: u64,
    fixed_request: Option<u32>,
    forced: Option<ForcedRescale>,
    samples: Vec<SpeedSample>,
    loss_history: Vec<LossPoint>,
    loss_fit: Option<LossCurveModel>,
    fitted_len: usize,
    speed_fit: Option<ResourceModel>,
    fresh_from_exploration: bool,
}

impl SimJob {
    fn is_running(&self) -> bool {
        matches!(self.phase, Phase::Running | Phase::Exploring { .. })
    }

    fn step(&self) -> f64 {
        self.accrued * self.steps_per_epoch
    }
}

struct Simulation<'a> {
    config: &'a SimConfig,
    jobs: Vec<SimJob>,
    queue: VecDeque<usize>,
    events: EventQueue,
    now: f64,
    rng: ChaCha8Rng,
    audit: CapacityAudit,
    peak_concurrent: usize,
    in_system: usize,
    done: usize,
    ticks: u64,
}

/// Runs one simulation to completion of every job.
pub fn run_simulation(config: &SimConfig, workload: &Workload) -> Result<SimReport, SimError> {
    config.validate()?;
    if workload.jobs.is_empty() {
        return Err(SimError::EmptyWorkload);
    }
    let mut sim = Simulation::new(config, workload)?;
    sim.run()?;
    Ok(sim.report())
}

impl<'a> Simulation<'a> {
    fn new(config: &'a SimConfig, workload: &Workload) -> Result<Self, SimError> {
        let shape = config.loss_shape;
        let mut jobs = Vec::with_capacity(workload.jobs.len());
        for job in &workload.jobs {
            job.profile.validate().map_err(|source| SimError::Model { job: job.id, source })?;
            if !(job.true_epochs > 0.0) {
                return Err(SimError::Config(format!("job {} has true_epochs {}", job.id, job.true_epochs)));
            }
            let steps_per_epoch = job.profile.steps_per_epoch;
            let target_step = job.true_epochs * steps_per_epoch;
            let true_loss = LossCurveModel {
                beta0: (1.0 / config.convergence_margin - shape.offset) / target_step,
                beta1: shape.offset,
                beta2: shape.floor,
            };
            let forced = config.forced_rescales.iter().find(|f| f.job_id == job.id).copied();
            jobs.push(SimJob {
                id: job.id,
                arrival: job.arrival,
                true_epochs: job.true_epochs,
                steps_per_epoch,
                truth: ProfileSpeed::with_threshold(job.profile.clone(), config.n_threshold),
                true_loss,
                phase: Phase::Pending,
                held: 0,
                active: 0,
                rate: 0.0,
                accrued: 0.0,
                active_time: 0.0,
                paused_until: f64::NEG_INFINITY,
                paused_total: 0.0,
                start: None,
                completion: None,
                restarts: 0,
                gpu_seconds: 0.0,
                base_lr: job.profile.base_lr,
                lr: job.profile.base_lr,
                reallocations: Vec::new(),
                generation: 0,
                fixed_request: None,
                forced,
                samples: Vec::new(),
                loss_history: Vec::new(),
                loss_fit: None,
                fitted_len: 0,
                speed_fit: None,
                fresh_from_exploration: false,
            });
        }
        let mut events = EventQueue::default();
        for job in &jobs {
            events.push(SimEvent { timestamp: job.arrival, kind: EventKind::JobArrival, job: Some(job.id), generation: 0 });
        }
        events.push(SimEvent { timestamp: 0.0, kind: EventKind::ScheduleTick, job: None, generation: 0 });
        Ok(Self {
            config,
            jobs,
            queue: VecDeque::new(),
            events,
            now: 0.0,
            rng: ChaCha8Rng::seed_from_u64(config.rng_seed),
            audit: CapacityAudit { capacity: config.cluster.capacity, checks: 0, max_allocated: 0 },
            peak_concurrent: 0,
            in_system: 0,
            done: 0,
            ticks: 0,
        })
    }

    fn index(&self, id: JobId) -> usize {
        // Workload ids are not required to be dense.
        self.jobs.iter().position(|j| j.id == id).expect("event refers to a known job")
    }

    fn allocated(&self) -> u32 {
        self.jobs.iter().map(|j| j.held).sum()
    }

    fn free(&self) -> u32 {
        self.config.cluster.capacity - self.allocated()
    }

    fn run(&mut self) -> Result<(), SimError> {
        while let Some(event) = self.events.pop() {
            self.advance(event.timestamp);
            match event.kind {
                EventKind::JobCompletion => {
                    let idx = self.index(event.job.expect("completion has a job"));
                    if self.jobs[idx].generation == event.generation && self.jobs[idx].is_running() {
                        self.complete(idx);
                    }
                }
                EventKind::JobArrival => {
                    let idx = self.index(event.job.expect("arrival has a job"));
                    self.jobs[idx].phase = Phase::Queued;
                    self.queue.push_back(idx);
                    self.in_system += 1;
                    self.peak_concurrent = self.peak_concurrent.max(self.in_system);
                }
                EventKind::ScheduleTick => {
                    self.ticks += 1;
                    if self.ticks > MAX_TICKS {
                        return Err(SimError::Stalled(self.ticks));
                    }
                    self.tick()?;
                    if self.done < self.jobs.len() {
                        self.events.push(SimEvent {
                            timestamp: self.now + self.config.scheduling_interval,
                            kind: EventKind::ScheduleTick,
                            job: None,
                            generation: 0,
                        });
                    }
                }
                EventKind::RestartComplete => {}
                EventKind::ExploreWindow => {
                    let idx = self.index(event.job.expect("window has a job"));
                    if let Phase::Exploring { window, .. } = self.jobs[idx].phase {
                        if window as u64 + 1 == event.generation {
                            self.next_window(idx)?;
                        }
                    }
                }
            }
            self.check_capacity()?;
        }
        Ok(())
    }

    fn check_capacity(&mut self) -> Result<(), SimError> {
        let allocated = self.allocated();
        self.audit.checks += 1;
        self.audit.max_allocated = self.audit.max_allocated.max(allocated);
        if allocated > self.config.cluster.capacity {
            return Err(SimError::CapacityViolation { time: self.now, allocated });
        }
        Ok(())
    }

    fn advance(&mut self, to: f64) {
        let from = self.now;
        if to <= from {
            return;
        }
        for job in self.jobs.iter_mut().filter(|j| j.held > 0) {
            job.gpu_seconds += job.held as f64 * (to - from);
            let resume = job.paused_until.max(from);
            if resume > from {
                job.paused_total += resume.min(to) - from;
            }
            if to > resume {
                job.accrued += job.rate * (to - resume);
                job.active_time += to - resume;
            }
        }
        self.now = to;
    }

    fn complete(&mut self, idx: usize) {
        let job = &mut self.jobs[idx];
        job.accrued = job.true_epochs;
        job.completion = Some(self.now);
        job.phase = Phase::Done;
        job.held = 0;
        job.rate = 0.0;
        self.in_system -= 1;
        self.done += 1;
        debug!("t={:.0} job {} completed", self.now, job.id);
    }

    fn schedule_completion(&mut self, idx: usize) {
        let job = &mut self.jobs[idx];
        job.generation += 1;
        let remaining = (job.true_epochs - job.accrued).max(0.0);
        let at = job.paused_until.max(self.now) + remaining / job.rate;
        self.events.push(SimEvent {
            timestamp: at,
            kind: EventKind::JobCompletion,
            job: Some(job.id),
            generation: job.generation,
        });
    }

    /// Sets a job's reserved and active worker counts. Starting a job is
    /// free; changing the active count of a running job is a restart.
    fn apply(&mut self, idx: usize, held: u32, active: u32) -> Result<(), SimError> {
        let now = self.now;
        let restart_cost = self.config.restart_cost;
        let job = &mut self.jobs[idx];
        let rate = job.truth.speed(active).map_err(|source| SimError::Model { job: job.id, source })?;
        if job.held == 0 {
            job.start = Some(now);
            job.lr = rescale_learning_rate(job.base_lr, 1, active);
        } else if active != job.active {
            job.restarts += 1;
            job.paused_until = now + restart_cost;
            job.lr = rescale_learning_rate(job.lr, job.active, active);
            self.events.push(SimEvent {
                timestamp: job.paused_until,
                kind: EventKind::RestartComplete,
                job: Some(job.id),
                generation: job.generation + 1,
            });
        } else {
            job.held = held;
            return Ok(());
        }
        job.held = held;
        job.active = active;
        job.rate = rate;
        job.reallocations.push(Reallocation { time: now, workers: active, held, lr: job.lr });
        self.schedule_completion(idx);
        Ok(())
    }

    fn tick(&mut self) -> Result<(), SimError> {
        match self.config.strategy {
            Strategy::Fixed(k) => self.tick_fixed(k),
            Strategy::Precompute => self.tick_dynamic(false),
            Strategy::Exploratory => {
                self.observe_losses();
                self.tick_dynamic(true)
            }
        }
    }

    fn tick_fixed(&mut self, k: u32) -> Result<(), SimError> {
        for idx in 0..self.jobs.len() {
            let job = &self.jobs[idx];
            let Some(forced) = job.forced else { continue };
            if job.phase == Phase::Running && job.accrued >= forced.at_epoch && forced.workers != job.held {
                let needed = forced.workers.saturating_sub(job.held);
                if needed <= self.free() {
                    self.jobs[idx].fixed_request = Some(forced.workers);
                    self.jobs[idx].forced = None;
                    self.apply(idx, forced.workers, forced.workers)?;
                }
            }
        }
        while let Some(&idx) = self.queue.front() {
            let request = self.jobs[idx].fixed_request.unwrap_or(k);
            if request > self.free() {
                break;
            }
            self.queue.pop_front();
            self.jobs[idx].phase = Phase::Running;
            self.apply(idx, request, request)?;
        }
        Ok(())
    }

    fn floor(&self, idx: usize) -> u32 {
        let job = &self.jobs[idx];
        if self.config.allow_shrink || job.fresh_from_exploration {
            1
        } else {
            job.held.max(1)
        }
    }

    fn tick_dynamic(&mut self, explore: bool) -> Result<(), SimError> {
        let capacity = self.config.cluster.capacity;
        let reserved: u32 = self
            .jobs
            .iter()
            .filter(|j| matches!(j.phase, Phase::Exploring { .. }))
            .map(|j| j.held)
            .sum();
        let mut avail = capacity - reserved;
        let mut running: Vec<usize> = (0..self.jobs.len()).filter(|&i| self.jobs[i].phase == Phase::Running).collect();
        if explore {
            for &i in &running {
                self.refit_loss(i);
            }
        }
        let mut floors: Vec<u32> = running.iter().map(|&i| self.floor(i)).collect();
        let entry = if explore { self.config.explore.reservation() } else { 1 };

        while let Some(&idx) = self.queue.front() {
            let free = avail.saturating_sub(floors.iter().sum());
            if free < entry {
                if !self.config.reclaim_for_admission {
                    break;
                }
                match self.reclaim(&running, &floors, entry - free)? {
                    Some(reduced) => floors = reduced,
                    None => break,
                }
            }
            self.queue.pop_front();
            if explore {
                self.start_exploring(idx)?;
                avail -= entry;
            } else {
                self.jobs[idx].phase = Phase::Running;
                running.push(idx);
                floors.push(1);
            }
        }
        if running.is_empty() {
            return Ok(());
        }
        let states = running.iter().map(|&i| self.state(i)).collect::<Result<Vec<_>, _>>()?;
        let counts = doubling_allocate_from(&states, avail, &floors)
            .map_err(|source| SimError::Alloc { time: self.now, source })?
            .worker_counts();
        drop(states);

        // Release GPUs before granting them.
        let mut order: Vec<usize> = (0..running.len()).collect();
        order.sort_by_key(|&k| counts[k] > self.jobs[running[k]].held);
        for k in order {
            let idx = running[k];
            self.jobs[idx].fresh_from_exploration = false;
            if counts[k] != self.jobs[idx].held || counts[k] != self.jobs[idx].active {
                self.apply(idx, counts[k], counts[k])?;
            }
        }
        Ok(())
    }

    /// Lowers floors by halving the running jobs that lose the least
    /// predicted time per released GPU until `needed` GPUs are released.
    /// Among equal losses the most recent arrival gives way first.
    fn reclaim(&self, running: &[usize], floors: &[u32], needed: u32) -> Result<Option<Vec<u32>>, SimError> {
        let mut floors = floors.to_vec();
        let mut released = 0;
        while released < needed {
            let mut best: Option<(f64, usize)> = None;
            for (k, &idx) in running.iter().enumerate() {
                let w = floors[k];
                if w < 2 {
                    continue;
                }
                let state = self.state(idx)?;
                let time = |w: u32| -> Result<f64, SimError> {
                    let t = state.model.epoch_time(w).map_err(|source| SimError::Model { job: state.job_id, source })?;
                    Ok(state.remaining_epochs * t)
                };
                let loss = (time(w / 2)? - time(w)?) / (w / 2) as f64;
                let younger = |b: usize| {
                    let (a, b) = (&self.jobs[idx], &self.jobs[running[b]]);
                    (a.arrival, a.id) > (b.arrival, b.id)
                };
                if best.is_none_or(|(l, b)| loss < l || (loss == l && younger(b))) {
                    best = Some((loss, k));
                }
            }
            let Some((_, k)) = best else { return Ok(None) };
            released += floors[k] / 2;
            floors[k] /= 2;
        }
        Ok(Some(floors))
    }

    /// The scheduler's view of a running job: true model and remaining
    /// epochs under Precompute, fitted ones under Exploratory.
    fn state(&self, idx: usize) -> Result<JobState<View<'_>>, SimError> {
        let job = &self.jobs[idx];
        let margin = self.config.convergence_margin;
        let (q, view) = match self.config.strategy {
            Strategy::Exploratory => {
                let model = job.speed_fit.ok_or_else(|| SimError::Config(format!("job {} has no speed model", job.id)))?;
                let q = match &job.loss_fit {
                    Some(fit) => remaining_epochs(fit, job.step(), margin, job.steps_per_epoch),
                    None => (self.config.prior_epochs - job.accrued).max(0.0),
                };
                (q, View::Fitted(model))
            }
            _ => (remaining_epochs(&job.true_loss, job.step(), margin, job.steps_per_epoch), View::True(&job.truth)),
        };
        Ok(JobState {
            job_id: job.id,
            remaining_epochs: q,
            model: view,
            current_workers: job.held,
            arrival_time: job.arrival,
            max_workers: Some(self.config.worker_cap()),
        })
    }

    fn refit_loss(&mut self, idx: usize) {
        let growth = self.config.loss_refit_growth;
        let job = &mut self.jobs[idx];
        let len = job.loss_history.len();
        let stale = job.loss_fit.is_none() || len as f64 >= job.fitted_len as f64 * (1.0 + growth);
        if stale && len != job.fitted_len {
            if let Ok(fit) = fit_loss_curve(&job.loss_history) {
                job.loss_fit = Some(fit);
            }
            job.fitted_len = len;
        }
    }

    fn observe_losses(&mut self) {
        for idx in 0..self.jobs.len() {
            if self.jobs[idx].is_running() {
                self.observe_loss(idx);
            }
        }
    }

    fn observe_loss(&mut self, idx: usize) {
        let noise = self.config.loss_shape.noise;
        let k = self.jobs[idx].step().round() as u64;
        if self.jobs[idx].loss_history.last().is_some_and(|p| p.k == k) {
            return;
        }
        let mut l = self.jobs[idx].true_loss.predict(k as f64);
        if noise > 0.0 {
            let n = Normal::new(0.0, noise).expect("finite noise");
            l = (l * (1.0 + n.sample(&mut self.rng))).max(f64::MIN_POSITIVE);
        }
        let history = &mut self.jobs[idx].loss_history;
        history.push(LossPoint { k, l });
        if history.len() > MAX_LOSS_HISTORY {
            let last = *history.last().expect("nonempty");
            let mut i = 0;
            history.retain(|_| {
                i += 1;
                i % 2 == 1
            });
            if history.last() != Some(&last) {
                history.push(last);
            }
            // Thinning invalidates the growth baseline.
            self.jobs[idx].fitted_len = self.jobs[idx].fitted_len.min(self.jobs[idx].loss_history.len() / 2);
        }
    }

    fn start_exploring(&mut self, idx: usize) -> Result<(), SimError> {
        let explore = &self.config.explore;
        let (reservation, first, window) = (explore.reservation(), explore.widths[0], explore.window);
        self.jobs[idx].phase = Phase::Exploring { window: 0, active_time_at_start: 0.0, accrued_at_start: 0.0 };
        self.apply(idx, reservation, first)?;
        self.observe_loss(idx);
        let job = &self.jobs[idx];
        self.events.push(SimEvent { timestamp: self.now + window, kind: EventKind::ExploreWindow, job: Some(job.id), generation: 1 });
        Ok(())
    }

    fn next_window(&mut self, idx: usize) -> Result<(), SimError> {
        let Phase::Exploring { window, active_time_at_start, accrued_at_start } = self.jobs[idx].phase else {
            return Ok(());
        };
        {
            let job = &mut self.jobs[idx];
            let active_dt = job.active_time - active_time_at_start;
            if active_dt > 0.0 {
                job.samples.push(SpeedSample { w: job.active, speed: (job.accrued - accrued_at_start) / active_dt });
            }
        }
        self.observe_loss(idx);
        let next = window + 1;
        let explore = &self.config.explore;
        if let Some(&width) = explore.widths.get(next) {
            let (held, step) = (self.jobs[idx].held, explore.window);
            self.jobs[idx].phase = Phase::Exploring {
                window: next,
                active_time_at_start: self.jobs[idx].active_time,
                accrued_at_start: self.jobs[idx].accrued,
            };
            self.apply(idx, held, width)?;
            let id = self.jobs[idx].id;
            self.events.push(SimEvent {
                timestamp: self.now + step,
                kind: EventKind::ExploreWindow,
                job: Some(id),
                generation: next as u64 + 1,
            });
        } else {
            let job = &mut self.jobs[idx];
            let (m, n) = (job.truth.profile.m as f64, job.truth.profile.n as f64);
            let fit = fit_resource_model(&job.samples, m, n).map_err(|source| SimError::Fit { job: job.id, source })?;
            job.speed_fit = Some(fit);
            job.phase = Phase::Running;
            job.fresh_from_exploration = true;
            debug!("t={:.0} job {} finished exploring: {:?}", self.now, job.id, fit);
        }
        Ok(())
    }

    fn report(self) -> SimReport {
        let records: Vec<JobRecord> = self
            .jobs
            .into_iter()
            .map(|j| JobRecord {
                job_id: j.id,
                arrival: j.arrival,
                start: j.start.unwrap_or(j.arrival),
                completion: j.completion.unwrap_or(f64::NAN),
                restarts: j.restarts,
                paused_seconds: j.paused_total,
                gpu_seconds: j.gpu_seconds,
                epochs: j.accrued,
                final_workers: j.reallocations.last().map_or(0, |r| r.workers),
                final_lr: j.lr,
                reallocations: j.reallocations,
            })
            .collect();
        SimReport::new(self.config.strategy, records, self.peak_concurrent, self.audit)
    }
}
