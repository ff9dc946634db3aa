//! Per-minibatch time models for ring-architecture all-reduce and the
//! parametric speed model `f(w)` fitted for each job.
//!
//! All quantities are SI: seconds and bytes. Logarithms are base 2.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Default payload size (bytes) above which the bandwidth-optimal ring
/// algorithm is preferred over the latency-optimal recursive algorithms.
pub const DEFAULT_RING_THRESHOLD: f64 = 1.0e7;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CostModelError {
    #[error("worker count must be at least 1")]
    NoWorkers,
    #[error("doubling-halving requires a power-of-two worker count, got {0}")]
    NotPowerOfTwo(u32),
    #[error("degenerate resource model: step-time expression is {0} at w = {1}")]
    DegenerateModel(f64, u32),
    #[error("invalid {name}: {value}")]
    InvalidParameter { name: &'static str, value: f64 },
}

fn check(name: &'static str, value: f64, ok: bool) -> Result<(), CostModelError> {
    if ok {
        Ok(())
    } else {
        Err(CostModelError::InvalidParameter { name, value })
    }
}

/// Hockney-style communication parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CommParams {
    /// Latency per message (s).
    pub alpha: f64,
    /// Transfer time per byte (s).
    pub beta: f64,
    /// Reduction compute time per byte (s).
    pub gamma: f64,
}

impl CommParams {
    pub fn new(alpha: f64, beta: f64, gamma: f64) -> Result<Self, CostModelError> {
        let params = Self { alpha, beta, gamma };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<(), CostModelError> {
        for (name, v) in [("alpha", self.alpha), ("beta", self.beta), ("gamma", self.gamma)] {
            check(name, v, v.is_finite() && v >= 0.0)?;
        }
        Ok(())
    }
}

/// Measured constants of one training job.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobProfile {
    /// Global minibatch in examples, summed across workers.
    pub m: u32,
    /// Model (gradient) size in bytes.
    pub n: u64,
    /// Forward pass, seconds per example.
    pub t_forward: f64,
    /// Backward pass, seconds per example.
    pub t_back: f64,
    /// Optimizer steps per epoch at minibatch `m`.
    pub steps_per_epoch: f64,
    pub comm: CommParams,
    /// Checkpoint-stop-restart cost in seconds.
    pub restart_cost: f64,
    /// Learning rate at one worker.
    pub base_lr: f64,
}

impl JobProfile {
    pub fn validate(&self) -> Result<(), CostModelError> {
        check("m", self.m as f64, self.m >= 1)?;
        check("n", self.n as f64, self.n >= 1)?;
        check("t_forward", self.t_forward, self.t_forward.is_finite() && self.t_forward > 0.0)?;
        check("t_back", self.t_back, self.t_back.is_finite() && self.t_back > 0.0)?;
        check(
            "steps_per_epoch",
            self.steps_per_epoch,
            self.steps_per_epoch.is_finite() && self.steps_per_epoch >= 1.0,
        )?;
        check(
            "restart_cost",
            self.restart_cost,
            self.restart_cost.is_finite() && self.restart_cost >= 0.0,
        )?;
        check("base_lr", self.base_lr, self.base_lr.is_finite() && self.base_lr > 0.0)?;
        self.comm.validate()
    }

    /// Per-example compute time, forward plus backward.
    pub fn example_time(&self) -> f64 {
        self.t_forward + self.t_back
    }

    /// The same job with a different global minibatch.
    pub fn with_minibatch(&self, m: u32) -> JobProfile {
        JobProfile { m, ..self.clone() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AllReduceAlgo {
    Ring,
    DoublingHalving,
    BinaryBlocks,
}

pub fn is_power_of_two(w: u32) -> bool {
    w.is_power_of_two()
}

/// Largest power of two that is `<= c`, or 0 when `c == 0`.
pub fn floor_power_of_two(c: u32) -> u32 {
    if c == 0 {
        0
    } else {
        1 << (31 - c.leading_zeros())
    }
}

fn ceil_log2(w: u32) -> u32 {
    if w <= 1 {
        0
    } else {
        32 - (w - 1).leading_zeros()
    }
}

/// Communication time of one all-reduce of `n` bytes across `w` workers.
///
/// A single worker exchanges nothing, so `w == 1` costs zero for every
/// algorithm even where the closed form would leave a constant behind.
pub fn allreduce_time(
    algo: AllReduceAlgo,
    w: u32,
    n: u64,
    comm: &CommParams,
) -> Result<f64, CostModelError> {
    if w == 0 {
        return Err(CostModelError::NoWorkers);
    }
    if algo == AllReduceAlgo::DoublingHalving && !is_power_of_two(w) {
        return Err(CostModelError::NotPowerOfTwo(w));
    }
    if w == 1 {
        return Ok(0.0);
    }
    let wf = w as f64;
    let nf = n as f64;
    let CommParams { alpha, beta, gamma } = *comm;
    let t = match algo {
        AllReduceAlgo::Ring => {
            let steps = wf - 1.0;
            let chunk = nf / wf;
            steps * 4.0 * alpha + steps * chunk * 4.0 * beta + steps * chunk * 2.0 * gamma
        }
        AllReduceAlgo::DoublingHalving => {
            let rounds = w.trailing_zeros() as f64;
            4.0 * rounds * alpha + 4.0 * nf * beta + 2.5 * nf * gamma
        }
        AllReduceAlgo::BinaryBlocks => {
            let rounds = ceil_log2(w) as f64;
            (5.0 + 4.0 * rounds) * alpha + 7.0 * nf * beta + 3.0 * nf * gamma
        }
    };
    Ok(t)
}

/// Seconds per optimizer step: the global minibatch's compute split across
/// `w` data-parallel workers plus one gradient all-reduce.
pub fn step_time(profile: &JobProfile, w: u32, algo: AllReduceAlgo) -> Result<f64, CostModelError> {
    let comm = allreduce_time(algo, w, profile.n, &profile.comm)?;
    Ok(profile.m as f64 * profile.example_time() / w as f64 + comm)
}

/// Algorithm a ring-allreduce library would pick for this payload and worker count.
pub fn select_algorithm(w: u32, n: u64, n_threshold: f64) -> AllReduceAlgo {
    if n as f64 > n_threshold {
        AllReduceAlgo::Ring
    } else if is_power_of_two(w) {
        AllReduceAlgo::DoublingHalving
    } else {
        AllReduceAlgo::BinaryBlocks
    }
}

/// Anything that can predict a job's training speed in epochs per second.
pub trait SpeedModel {
    fn speed(&self, w: u32) -> Result<f64, CostModelError>;

    /// Seconds per epoch, `1 / speed`.
    fn epoch_time(&self, w: u32) -> Result<f64, CostModelError> {
        Ok(1.0 / self.speed(w)?)
    }
}

impl<T: SpeedModel + ?Sized> SpeedModel for &T {
    fn speed(&self, w: u32) -> Result<f64, CostModelError> {
        (**self).speed(w)
    }
}

/// Fitted coefficients of `f(w) = 1 / (θ0·m/w + θ1·(w−1) + θ2·(w−1)·n/w + θ3)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResourceModel {
    pub theta0: f64,
    pub theta1: f64,
    pub theta2: f64,
    pub theta3: f64,
    /// Minibatch used at fit time.
    pub m: f64,
    /// Model size used at fit time.
    pub n: f64,
}

impl ResourceModel {
    pub fn thetas(&self) -> [f64; 4] {
        [self.theta0, self.theta1, self.theta2, self.theta3]
    }

    /// Feature row `[m/w, w−1, (w−1)·n/w, 1]` whose dot product with θ is `1/f(w)`.
    pub fn features(m: f64, n: f64, w: u32) -> [f64; 4] {
        let wf = w as f64;
        [m / wf, wf - 1.0, (wf - 1.0) * n / wf, 1.0]
    }

    /// Seconds per epoch before inversion. Not checked for positivity.
    pub fn inverse_speed(&self, w: u32) -> f64 {
        Self::features(self.m, self.n, w)
            .iter()
            .zip(self.thetas())
            .map(|(x, t)| x * t)
            .sum()
    }

    pub fn validate(&self) -> Result<(), CostModelError> {
        for (name, v) in [
            ("theta0", self.theta0),
            ("theta1", self.theta1),
            ("theta2", self.theta2),
            ("theta3", self.theta3),
        ] {
            check(name, v, v.is_finite() && v >= 0.0)?;
        }
        check("m", self.m, self.m.is_finite() && self.m >= 0.0)?;
        check("n", self.n, self.n.is_finite() && self.n >= 0.0)?;
        if !(self.theta3 > 0.0 || self.theta0 * self.m > 0.0) {
            return Err(CostModelError::DegenerateModel(self.inverse_speed(1), 1));
        }
        Ok(())
    }
}

/// Predicted epochs per second at `w` workers.
pub fn predict_speed(model: &ResourceModel, w: u32) -> Result<f64, CostModelError> {
    if w == 0 {
        return Err(CostModelError::NoWorkers);
    }
    let inner = model.inverse_speed(w);
    if !(inner > 0.0) || !inner.is_finite() {
        return Err(CostModelError::DegenerateModel(inner, w));
    }
    Ok(1.0 / inner)
}

impl SpeedModel for ResourceModel {
    fn speed(&self, w: u32) -> Result<f64, CostModelError> {
        predict_speed(self, w)
    }
}

/// Ground-truth speed of a profiled job when each worker keeps the
/// profile's minibatch `m`: `w` workers run a global batch of `m·w`,
/// an epoch takes `steps_per_epoch / w` steps, and the all-reduce
/// algorithm is the one [`select_algorithm`] picks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileSpeed {
    pub profile: JobProfile,
    pub n_threshold: f64,
}

impl ProfileSpeed {
    pub fn new(profile: JobProfile) -> Self {
        Self { profile, n_threshold: DEFAULT_RING_THRESHOLD }
    }

    pub fn with_threshold(profile: JobProfile, n_threshold: f64) -> Self {
        Self { profile, n_threshold }
    }

    /// Step time at `w` workers with the global batch grown to `m·w`.
    pub fn step_time(&self, w: u32) -> Result<f64, CostModelError> {
        if w == 0 {
            return Err(CostModelError::NoWorkers);
        }
        let algo = select_algorithm(w, self.profile.n, self.n_threshold);
        let global = self.profile.with_minibatch(self.profile.m.saturating_mul(w));
        step_time(&global, w, algo)
    }

    /// Examples processed per second at `w` workers.
    pub fn throughput(&self, w: u32) -> Result<f64, CostModelError> {
        Ok(self.profile.m as f64 * w as f64 / self.step_time(w)?)
    }
}

impl SpeedModel for ProfileSpeed {
    fn speed(&self, w: u32) -> Result<f64, CostModelError> {
        let steps = self.profile.steps_per_epoch / w.max(1) as f64;
        Ok(1.0 / (steps * self.step_time(w)?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn unit_comm() -> CommParams {
        CommParams::new(1.0, 1.0, 1.0).unwrap()
    }

    fn profile(t_forward: f64, t_back: f64, n: u64, comm: CommParams) -> JobProfile {
        JobProfile {
            m: 128,
            n,
            t_forward,
            t_back,
            steps_per_epoch: 100.0,
            comm,
            restart_cost: 10.0,
            base_lr: 0.1,
        }
    }

    #[test]
    fn single_worker_has_no_communication() {
        let comm = unit_comm();
        for algo in [AllReduceAlgo::Ring, AllReduceAlgo::DoublingHalving, AllReduceAlgo::BinaryBlocks] {
            assert_eq!(allreduce_time(algo, 1, 1_000_000, &comm).unwrap(), 0.0);
        }
    }

    #[test]
    fn ring_hand_evaluation() {
        // 3·4·1 + 3·(4/4)·4 + 3·(4/4)·2
        assert_eq!(allreduce_time(AllReduceAlgo::Ring, 4, 4, &unit_comm()).unwrap(), 30.0);
    }

    #[test]
    fn doubling_halving_hand_evaluation() {
        let comm = CommParams::new(0.0, 1.0, 0.0).unwrap();
        assert_eq!(allreduce_time(AllReduceAlgo::DoublingHalving, 4, 8, &comm).unwrap(), 32.0);
    }

    #[test]
    fn binary_blocks_hand_evaluation() {
        // w = 6: ceil(log2 6) = 3 → (5 + 12)·1 + 7·2 + 3·2
        assert_eq!(allreduce_time(AllReduceAlgo::BinaryBlocks, 6, 2, &unit_comm()).unwrap(), 37.0);
    }

    #[test]
    fn doubling_halving_rejects_non_power_of_two() {
        assert_eq!(
            allreduce_time(AllReduceAlgo::DoublingHalving, 6, 8, &unit_comm()),
            Err(CostModelError::NotPowerOfTwo(6))
        );
        assert_eq!(
            allreduce_time(AllReduceAlgo::Ring, 0, 8, &unit_comm()),
            Err(CostModelError::NoWorkers)
        );
    }

    #[test]
    fn step_time_examples() {
        let p = profile(0.0005, 0.0005, 1_000_000, unit_comm());
        assert_relative_eq!(step_time(&p, 1, AllReduceAlgo::Ring).unwrap(), 0.128, epsilon = 1e-15);

        let mut p = profile(1.0, 1.0, 4, unit_comm());
        p.t_forward = 0.0;
        p.t_back = 0.0;
        assert_eq!(step_time(&p, 4, AllReduceAlgo::Ring).unwrap(), 30.0);
    }

    #[test]
    fn algorithm_selection() {
        assert_eq!(select_algorithm(8, 1_000_000, 1e7), AllReduceAlgo::DoublingHalving);
        assert_eq!(select_algorithm(6, 1_000_000, 1e7), AllReduceAlgo::BinaryBlocks);
        assert_eq!(select_algorithm(8, 100_000_000, 1e7), AllReduceAlgo::Ring);
        assert_eq!(select_algorithm(1, 1, 1e7), AllReduceAlgo::DoublingHalving);
    }

    #[test]
    fn predict_speed_examples() {
        let constant = ResourceModel { theta0: 0.0, theta1: 0.0, theta2: 0.0, theta3: 0.5, m: 128.0, n: 1e6 };
        for w in [1, 3, 64] {
            assert_eq!(predict_speed(&constant, w).unwrap(), 2.0);
        }
        let compute = ResourceModel { theta0: 1.0, theta1: 0.0, theta2: 0.0, theta3: 0.0, m: 128.0, n: 1e6 };
        assert_eq!(predict_speed(&compute, 128).unwrap(), 1.0);
    }

    #[test]
    fn degenerate_model_is_an_error() {
        let zero = ResourceModel { theta0: 0.0, theta1: 0.0, theta2: 0.0, theta3: 0.0, m: 128.0, n: 1.0 };
        assert!(matches!(predict_speed(&zero, 2), Err(CostModelError::DegenerateModel(..))));
        assert!(zero.validate().is_err());
    }

    #[test]
    fn ring_step_time_matches_resource_model_shape() {
        let comm = CommParams::new(2e-4, 1e-9, 3e-10).unwrap();
        let p = profile(0.0008, 0.002, 5_000_000, comm);
        let model = ResourceModel {
            theta0: p.example_time(),
            theta1: 4.0 * comm.alpha,
            theta2: 4.0 * comm.beta + 2.0 * comm.gamma,
            theta3: 0.0,
            m: p.m as f64,
            n: p.n as f64,
        };
        for w in 1..=64 {
            let st = step_time(&p, w, AllReduceAlgo::Ring).unwrap();
            assert_relative_eq!(1.0 / predict_speed(&model, w).unwrap(), st, max_relative = 1e-12);
        }
    }

    #[test]
    fn floor_power_of_two_values() {
        assert_eq!(floor_power_of_two(0), 0);
        assert_eq!(floor_power_of_two(1), 1);
        assert_eq!(floor_power_of_two(31), 16);
        assert_eq!(floor_power_of_two(64), 64);
        assert_eq!(ceil_log2(9), 4);
        assert_eq!(ceil_log2(8), 3);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn comm_strategy() -> impl Strategy<Value = CommParams> {
            (0.0..1e-2f64, 0.0..1e-8f64, 0.0..1e-8f64).prop_map(|(a, b, g)| CommParams::new(a, b, g).unwrap())
        }

        proptest! {
            #[test]
            fn allreduce_nonnegative(w in 1u32..512, n in 1u64..1_000_000_000, comm in comm_strategy()) {
                for algo in [AllReduceAlgo::Ring, AllReduceAlgo::BinaryBlocks] {
                    prop_assert!(allreduce_time(algo, w, n, &comm).unwrap() >= 0.0);
                }
            }

            #[test]
            fn ring_strictly_increasing(w in 1u32..512, n in 1u64..1_000_000_000, comm in comm_strategy(), alpha in 1e-6..1e-2f64) {
                let comm = CommParams { alpha, ..comm };
                let a = allreduce_time(AllReduceAlgo::Ring, w, n, &comm).unwrap();
                let b = allreduce_time(AllReduceAlgo::Ring, w + 1, n, &comm).unwrap();
                prop_assert!(b > a);
            }

            #[test]
            fn doubling_halving_latency_grows_by_four_alpha(k in 1u32..20, n in 1u64..1_000_000, alpha in 1e-6..1.0f64) {
                let comm = CommParams { alpha, beta: 0.0, gamma: 0.0 };
                let w = 1u32 << k;
                let a = allreduce_time(AllReduceAlgo::DoublingHalving, w, n, &comm).unwrap();
                let b = allreduce_time(AllReduceAlgo::DoublingHalving, 2 * w, n, &comm).unwrap();
                prop_assert!((b - a - 4.0 * alpha).abs() <= 1e-12 * b.max(1.0));
            }

            #[test]
            fn doubling_halving_beats_binary_blocks_without_latency(k in 0u32..12, n in 1u64..1_000_000_000, beta in 0.0..1e-8f64, gamma in 0.0..1e-8f64) {
                let comm = CommParams { alpha: 0.0, beta, gamma };
                let p = profile(1e-3, 2e-3, n, comm);
                let w = 1u32 << k;
                let dh = step_time(&p, w, AllReduceAlgo::DoublingHalving).unwrap();
                let bb = step_time(&p, w, AllReduceAlgo::BinaryBlocks).unwrap();
                prop_assert!(dh <= bb);
            }

            #[test]
            fn speed_is_homogeneous(t in proptest::array::uniform4(0.0..1.0f64), c in 0.01..100.0f64, w in 1u32..128) {
                let base = ResourceModel { theta0: t[0], theta1: t[1], theta2: t[2] * 1e-6, theta3: t[3] + 1e-3, m: 128.0, n: 1e6 };
                let scaled = ResourceModel {
                    theta0: base.theta0 * c, theta1: base.theta1 * c, theta2: base.theta2 * c, theta3: base.theta3 * c, ..base
                };
                let f = predict_speed(&base, w).unwrap();
                let g = predict_speed(&scaled, w).unwrap();
                prop_assert!((g - f / c).abs() <= 1e-9 * f / c);
            }
        }
    }
}
