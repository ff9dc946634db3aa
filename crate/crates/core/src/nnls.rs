//! Active-set non-negative least squares (Lawson–Hanson).
//!
//! Solves `min ‖Ax − b‖₂ subject to x ≥ 0`. Passive-set subproblems are
//! solved with an SVD so rank-deficient designs (the resource model's
//! feature columns are linearly dependent) still yield a least-squares
//! solution.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::fitting::FitError;

/// Relative tolerance used for the KKT conditions.
pub const KKT_TOLERANCE: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct NnlsProblem {
    a: DMatrix<f64>,
    b: DVector<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NnlsSolution {
    pub x: Vec<f64>,
    pub residual_norm: f64,
    pub iterations: usize,
}

impl NnlsProblem {
    /// Builds a problem from row-major observations.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R], b: &[f64]) -> Result<Self, FitError> {
        if rows.is_empty() {
            return Err(FitError::DimensionMismatch("design matrix has no rows".into()));
        }
        let cols = rows[0].as_ref().len();
        if cols == 0 {
            return Err(FitError::DimensionMismatch("design matrix has no columns".into()));
        }
        if rows.len() != b.len() {
            return Err(FitError::DimensionMismatch(format!(
                "{} rows but {} targets",
                rows.len(),
                b.len()
            )));
        }
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, row) in rows.iter().enumerate() {
            let row = row.as_ref();
            if row.len() != cols {
                return Err(FitError::DimensionMismatch(format!(
                    "row {i} has {} columns, expected {cols}",
                    row.len()
                )));
            }
            data.extend_from_slice(row);
        }
        if data.iter().chain(b).any(|v| !v.is_finite()) {
            return Err(FitError::NonFinite);
        }
        Ok(Self {
            a: DMatrix::from_row_slice(rows.len(), cols, &data),
            b: DVector::from_column_slice(b),
        })
    }

    pub fn rows(&self) -> usize {
        self.a.nrows()
    }

    pub fn cols(&self) -> usize {
        self.a.ncols()
    }

    pub fn residual_norm(&self, x: &[f64]) -> f64 {
        let x = DVector::from_column_slice(x);
        (&self.a * x - &self.b).norm()
    }

    /// Gradient of `½‖Ax − b‖²`.
    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let x = DVector::from_column_slice(x);
        let r = &self.a * x - &self.b;
        (self.a.transpose() * r).iter().copied().collect()
    }

    /// Scale against which KKT residuals are measured.
    pub fn kkt_scale(&self) -> f64 {
        let scale = self.a.norm() * self.b.norm().max(self.a.norm());
        if scale > 0.0 {
            scale
        } else {
            1.0
        }
    }

    /// Largest relative KKT violation of `x`: negativity, a negative
    /// gradient at a bound, or a nonzero gradient at a free coefficient.
    pub fn kkt_violation(&self, x: &[f64]) -> f64 {
        let g = self.gradient(x);
        let scale = self.kkt_scale();
        x.iter()
            .zip(&g)
            .map(|(&xi, &gi)| {
                if xi < 0.0 {
                    f64::INFINITY
                } else if xi == 0.0 {
                    (-gi).max(0.0) / scale
                } else {
                    gi.abs() / scale
                }
            })
            .fold(0.0, f64::max)
    }
}

fn solve_passive(a: &DMatrix<f64>, b: &DVector<f64>, passive: &[usize]) -> DVector<f64> {
    let sub = a.select_columns(passive.iter());
    let svd = sub.svd(true, true);
    let eps = f64::EPSILON * svd.singular_values.max() * a.nrows().max(a.ncols()) as f64;
    let z = svd.solve(b, eps).expect("svd computed with u and v");
    let mut full = DVector::zeros(a.ncols());
    for (k, &j) in passive.iter().enumerate() {
        full[j] = z[k];
    }
    full
}

/// Solves the problem. Fails with [`FitError::NotConverged`] carrying the
/// best iterate when the active set has not settled after `3 × cols`
/// outer iterations.
pub fn nnls(problem: &NnlsProblem) -> Result<NnlsSolution, FitError> {
    let a = &problem.a;
    let b = &problem.b;
    let n = a.ncols();
    let max_iter = 3 * n;
    let tol = 1e-14 * problem.kkt_scale();

    let mut x = DVector::<f64>::zeros(n);
    let mut passive: Vec<usize> = Vec::new();
    let mut in_passive = vec![false; n];
    let mut iterations = 0;

    loop {
        let grad = a.transpose() * (b - a * &x);
        // Candidates whose inclusion lowers the objective. An index that
        // fails to come out positive is skipped until x changes.
        let mut blocked = vec![false; n];
        let entering = loop {
            let best = (0..n)
                .filter(|&j| !in_passive[j] && !blocked[j] && grad[j] > tol)
                .max_by(|&i, &j| grad[i].total_cmp(&grad[j]).then(j.cmp(&i)));
            let Some(j) = best else { break None };
            let mut trial = passive.clone();
            trial.push(j);
            let z = solve_passive(a, b, &trial);
            if z[j] > 0.0 {
                break Some((j, z));
            }
            blocked[j] = true;
        };
        let Some((j, mut z)) = entering else { break };

        if iterations >= max_iter {
            let x: Vec<f64> = x.iter().copied().collect();
            let residual_norm = problem.residual_norm(&x);
            return Err(FitError::NotConverged { best: NnlsSolution { x, residual_norm, iterations } });
        }
        iterations += 1;
        passive.push(j);
        in_passive[j] = true;

        loop {
            if passive.iter().all(|&i| z[i] > 0.0) {
                x = z;
                break;
            }
            // Step toward z until the first passive coefficient hits zero.
            let (blocking, step) = passive
                .iter()
                .filter(|&&i| z[i] <= 0.0)
                .map(|&i| (i, x[i] / (x[i] - z[i])))
                .min_by(|a, b| a.1.total_cmp(&b.1))
                .expect("some passive coefficient is nonpositive");
            x = &x + (&z - &x) * step;
            x[blocking] = 0.0;
            let floor = f64::EPSILON * x.amax();
            for &i in &passive {
                if x[i] <= floor {
                    x[i] = 0.0;
                    in_passive[i] = false;
                }
            }
            passive.retain(|i| in_passive[*i]);
            if passive.is_empty() {
                break;
            }
            z = solve_passive(a, b, &passive);
        }
    }

    let x: Vec<f64> = x.iter().map(|v| v.max(0.0)).collect();
    let residual_norm = problem.residual_norm(&x);
    Ok(NnlsSolution { x, residual_norm, iterations })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn solve(rows: &[Vec<f64>], b: &[f64]) -> NnlsSolution {
        nnls(&NnlsProblem::from_rows(rows, b).unwrap()).unwrap()
    }

    #[test]
    fn feasible_unconstrained_optimum() {
        let s = solve(&[vec![1.0, 0.0], vec![0.0, 1.0]], &[3.0, 5.0]);
        assert!((s.x[0] - 3.0).abs() < 1e-12 && (s.x[1] - 5.0).abs() < 1e-12);
        assert!(s.residual_norm < 1e-12);
    }

    #[test]
    fn negative_component_clamps() {
        let s = solve(&[vec![1.0, 0.0], vec![0.0, 1.0]], &[1.0, -1.0]);
        assert_eq!(s.x, vec![1.0, 0.0]);
        assert!((s.residual_norm - 1.0).abs() < 1e-12);
    }

    #[test]
    fn all_negative_target_gives_zero() {
        let s = solve(&[vec![1.0, 2.0], vec![3.0, 1.0]], &[-1.0, -2.0]);
        assert_eq!(s.x, vec![0.0, 0.0]);
    }

    #[test]
    fn dimension_errors() {
        assert!(matches!(
            NnlsProblem::from_rows(&[vec![1.0, 2.0]], &[1.0, 2.0]),
            Err(FitError::DimensionMismatch(_))
        ));
        assert!(matches!(
            NnlsProblem::from_rows(&[vec![1.0, 2.0], vec![1.0]], &[1.0, 2.0]),
            Err(FitError::DimensionMismatch(_))
        ));
        let empty: [Vec<f64>; 0] = [];
        assert!(NnlsProblem::from_rows(&empty, &[]).is_err());
        assert!(matches!(NnlsProblem::from_rows(&[vec![f64::NAN]], &[1.0]), Err(FitError::NonFinite)));
    }

    #[test]
    fn rank_deficient_columns() {
        // Columns 0 and 2 are identical.
        let rows: Vec<Vec<f64>> = (1..=5).map(|i| vec![i as f64, 1.0, i as f64]).collect();
        let b: Vec<f64> = (1..=5).map(|i| 2.0 * i as f64 + 1.0).collect();
        let p = NnlsProblem::from_rows(&rows, &b).unwrap();
        let s = nnls(&p).unwrap();
        assert!(s.residual_norm < 1e-10);
        assert!(p.kkt_violation(&s.x) < KKT_TOLERANCE);
    }

    #[test]
    fn random_instances_satisfy_kkt() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..200 {
            let m = rng.random_range(1..12);
            let n = rng.random_range(1..8);
            let rows: Vec<Vec<f64>> =
                (0..m).map(|_| (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
            let b: Vec<f64> = (0..m).map(|_| rng.random_range(-1.0..1.0)).collect();
            let p = NnlsProblem::from_rows(&rows, &b).unwrap();
            let s = nnls(&p).unwrap();
            assert!(s.x.iter().all(|v| *v >= 0.0));
            assert!(p.kkt_violation(&s.x) <= KKT_TOLERANCE, "violation {}", p.kkt_violation(&s.x));
            assert!(s.residual_norm <= p.residual_norm(&vec![0.0; n]) + 1e-12);
        }
    }
}
