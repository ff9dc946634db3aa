//! Online models fitted with NNLS: the loss curve `l = 1/(β0·k + β1) + β2`
//! used to estimate remaining epochs, and the resource model `f(w)`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::costmodel::{CostModelError, ResourceModel};
use crate::nnls::{nnls, NnlsProblem, NnlsSolution};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FitError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("input contains non-finite values")]
    NonFinite,
    #[error("nnls did not converge after {} iterations", best.iterations)]
    NotConverged { best: NnlsSolution },
    #[error("insufficient data: need at least {needed} {what}, got {got}")]
    InsufficientData { needed: usize, got: usize, what: &'static str },
    #[error("invalid sample: {0}")]
    InvalidSample(String),
    #[error("degenerate fit: {0}")]
    Degenerate(String),
    #[error(transparent)]
    Model(#[from] CostModelError),
}

/// Default convergence margin: training is considered converged once the
/// loss is within this distance of its asymptote.
pub const DEFAULT_CONVERGENCE_MARGIN: f64 = 0.01;

const FLOOR_GRID_STEPS: usize = 100;
const REFINE_LEVELS: usize = 4;
const REFINE_STEPS: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossPoint {
    pub k: u64,
    pub l: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossCurveModel {
    pub beta0: f64,
    pub beta1: f64,
    pub beta2: f64,
}

impl LossCurveModel {
    pub fn predict(&self, k: f64) -> f64 {
        1.0 / (self.beta0 * k + self.beta1) + self.beta2
    }

    /// Step at which the excess loss over the asymptote reaches `margin`.
    pub fn convergence_step(&self, margin: f64) -> f64 {
        (1.0 / margin - self.beta1) / self.beta0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpeedSample {
    pub w: u32,
    /// Epochs per second.
    pub speed: f64,
}

fn linearized_fit(points: &[LossPoint], floor: f64) -> Option<(LossCurveModel, f64)> {
    let (rows, targets): (Vec<[f64; 2]>, Vec<f64>) = points
        .iter()
        .filter(|p| p.l > floor)
        .map(|p| ([p.k as f64, 1.0], 1.0 / (p.l - floor)))
        .unzip();
    if rows.len() < 2 {
        return None;
    }
    let problem = NnlsProblem::from_rows(&rows, &targets).ok()?;
    let solution = match nnls(&problem) {
        Ok(s) => s,
        Err(FitError::NotConverged { best }) => best,
        Err(_) => return None,
    };
    let model = LossCurveModel { beta0: solution.x[0], beta1: solution.x[1], beta2: floor };
    if !(model.beta0 > 0.0) {
        return None;
    }
    let sse = loss_curve_sse(&model, points);
    sse.is_finite().then_some((model, sse))
}

/// Sum of squared residuals of `model` in loss space.
pub fn loss_curve_sse(model: &LossCurveModel, points: &[LossPoint]) -> f64 {
    points.iter().map(|p| (p.l - model.predict(p.k as f64)).powi(2)).sum()
}

/// Fits the loss curve by scanning the asymptote `β2` over
/// `[0, min loss)`, solving the linearized `1/(l − β2) = β0·k + β1` with
/// NNLS at each candidate, and keeping the candidate with the smallest
/// loss-space SSE. The scan is refined around the best coarse candidate.
pub fn fit_loss_curve(points: &[LossPoint]) -> Result<LossCurveModel, FitError> {
    let mut ks: Vec<u64> = points.iter().map(|p| p.k).collect();
    ks.sort_unstable();
    ks.dedup();
    if ks.len() < 3 {
        return Err(FitError::InsufficientData { needed: 3, got: ks.len(), what: "distinct steps" });
    }
    if let Some(p) = points.iter().find(|p| !(p.l.is_finite() && p.l > 0.0)) {
        return Err(FitError::InvalidSample(format!("loss {} at step {} is not positive", p.l, p.k)));
    }
    let min_l = points.iter().map(|p| p.l).fold(f64::INFINITY, f64::min);
    let max_l = points.iter().map(|p| p.l).fold(f64::NEG_INFINITY, f64::max);
    if max_l == min_l {
        return Err(FitError::Degenerate("all losses are equal".into()));
    }

    let mut best: Option<(LossCurveModel, f64)> = None;
    let consider = |floor: f64, best: &mut Option<(LossCurveModel, f64)>| {
        if let Some((model, sse)) = linearized_fit(points, floor) {
            if best.as_ref().is_none_or(|(_, b)| sse < *b) {
                *best = Some((model, sse));
            }
        }
    };

    let mut pitch = min_l / FLOOR_GRID_STEPS as f64;
    for i in 0..FLOOR_GRID_STEPS {
        consider(i as f64 * pitch, &mut best);
    }
    for _ in 0..REFINE_LEVELS {
        let Some((center, _)) = best.map(|(m, s)| (m.beta2, s)) else { break };
        let lo = (center - pitch).max(0.0);
        let hi = (center + pitch).min(min_l);
        pitch = (hi - lo) / REFINE_STEPS as f64;
        for i in 0..=REFINE_STEPS {
            let floor = lo + i as f64 * pitch;
            if floor < min_l {
                consider(floor, &mut best);
            }
        }
    }

    best.map(|(m, _)| m)
        .ok_or_else(|| FitError::Degenerate("no asymptote yields a decreasing curve".into()))
}

/// Remaining epochs until the excess loss falls to `margin`, clamped at 0.
pub fn remaining_epochs(model: &LossCurveModel, current_step: f64, margin: f64, steps_per_epoch: f64) -> f64 {
    let target = model.convergence_step(margin);
    (target - current_step).max(0.0) / steps_per_epoch
}

/// Fits `θ` so that `1/f(w)` matches `1/speed` for every sample.
///
/// Rows are scaled by the measured speed, so the solver minimizes the
/// relative error of the predicted epoch time rather than its absolute
/// error; otherwise the single-worker sample dominates the fit.
pub fn fit_resource_model(samples: &[SpeedSample], m: f64, n: f64) -> Result<ResourceModel, FitError> {
    let mut ws: Vec<u32> = samples.iter().map(|s| s.w).collect();
    ws.sort_unstable();
    ws.dedup();
    if ws.len() < 2 {
        return Err(FitError::InsufficientData { needed: 2, got: ws.len(), what: "distinct worker counts" });
    }
    if let Some(s) = samples.iter().find(|s| s.w == 0 || !(s.speed.is_finite() && s.speed > 0.0)) {
        return Err(FitError::InvalidSample(format!("speed {} at w = {}", s.speed, s.w)));
    }
    let mut rows: Vec<[f64; 4]> = samples
        .iter()
        .map(|s| ResourceModel::features(m, n, s.w).map(|x| x * s.speed))
        .collect();
    // Features span many orders of magnitude; solve with unit-norm columns.
    let mut scale = [0.0f64; 4];
    for (j, sc) in scale.iter_mut().enumerate() {
        let norm = rows.iter().map(|r| r[j] * r[j]).sum::<f64>().sqrt();
        *sc = if norm > 0.0 { norm } else { 1.0 };
    }
    for r in &mut rows {
        for j in 0..4 {
            r[j] /= scale[j];
        }
    }
    let targets = vec![1.0; samples.len()];
    let solution = nnls(&NnlsProblem::from_rows(&rows, &targets)?)?;
    let model = ResourceModel {
        theta0: solution.x[0] / scale[0],
        theta1: solution.x[1] / scale[1],
        theta2: solution.x[2] / scale[2],
        theta3: solution.x[3] / scale[3],
        m,
        n,
    };
    model.validate().map_err(|_| FitError::Degenerate("fitted step time vanishes at one worker".into()))?;
    Ok(model)
}

/// Sum of squared relative epoch-time residuals.
pub fn resource_model_sse(model: &ResourceModel, samples: &[SpeedSample]) -> f64 {
    samples.iter().map(|s| (model.inverse_speed(s.w) * s.speed - 1.0).powi(2)).sum()
}
