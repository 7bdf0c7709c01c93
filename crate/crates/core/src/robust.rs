//! Robust training by alternating semi-parametric fits with hard thresholding
//! of the residuals.
//!
//! Each round refits on the corrected targets `y − η·c`, then re-estimates the
//! sparse corruption `c` as the `⌊α·N⌋` largest-magnitude raw residuals
//! `y − ŷ`. The dual system matrix does not change between rounds, so its
//! factorization is computed once per fit.

use nalgebra::DVector;

use crate::error::{invalid, Result};
use crate::kernels::KernelSpec;
use crate::spr::{top_k_indices, FitProblem, SemiParamModel, SprSolver};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RobustConfig {
    /// Anticipated corruption fraction.
    pub alpha: f64,
    /// Correction rate applied to the corruption estimate.
    pub eta: f64,
    pub lambda: f64,
    pub max_iters: usize,
    /// Relative tolerance on `‖c_t − c_{t−1}‖₂`.
    pub tol: f64,
}

impl Default for RobustConfig {
    fn default() -> Self {
        Self {
            alpha: 0.05,
            eta: 1.0,
            lambda: 1.0,
            max_iters: 50,
            tol: 1e-6,
        }
    }
}

impl RobustConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=0.5).contains(&self.alpha) {
            return Err(invalid(format!("alpha must lie in [0, 0.5], got {}", self.alpha)));
        }
        if !(self.eta > 0.0 && self.eta <= 1.0) {
            return Err(invalid(format!("eta must lie in (0, 1], got {}", self.eta)));
        }
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err(invalid(format!("lambda must be positive, got {}", self.lambda)));
        }
        if self.max_iters == 0 {
            return Err(invalid("max_iters must be at least 1"));
        }
        if !(self.tol > 0.0) {
            return Err(invalid("tol must be positive"));
        }
        Ok(())
    }

    /// Sparsity budget `⌊α·N⌋`.
    pub fn budget(&self, n: usize) -> usize {
        ((self.alpha * n as f64) + 1e-9).floor() as usize
    }
}

/// Outcome of a robust fit.
#[derive(Debug, Clone, PartialEq)]
pub struct RobustFit {
    /// Model refit on `y − η·c` with the final corruption estimate.
    pub model: SemiParamModel,
    pub corruption: Vec<f64>,
    /// `‖c_t − c_{t−1}‖₂` per iteration.
    pub trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

/// Keeps the `k` largest-magnitude entries (ties to the lower index), zeroes
/// the rest.
pub fn hard_threshold(r: &[f64], k: usize) -> Result<Vec<f64>> {
    if k > r.len() {
        return Err(invalid(format!("sparsity {k} exceeds length {}", r.len())));
    }
    let mut out = vec![0.0; r.len()];
    for i in top_k_indices(r, k) {
        out[i] = r[i];
    }
    Ok(out)
}

/// One corruption update: refit on `y − η·c` and threshold the raw residual.
/// Returns the coefficients `o` of the refit and the new corruption estimate.
pub fn robust_step(
    solver: &SprSolver,
    y: &[f64],
    c: &[f64],
    eta: f64,
    k: usize,
) -> Result<(DVector<f64>, Vec<f64>)> {
    let target: Vec<f64> = y.iter().zip(c).map(|(&yi, &ci)| yi - eta * ci).collect();
    let o = solver.solve_coefficients(&target);
    let fitted = solver.fitted(&o);
    let resid: Vec<f64> = y.iter().zip(fitted.iter()).map(|(a, b)| a - b).collect();
    Ok((o, hard_threshold(&resid, k)?))
}

fn l2_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Runs the alternating loop on a prepared solver. `observe` sees the
/// coefficient vector `o_t` of every round (used by the recovery harness).
pub fn fit_respire_with_solver(
    solver: &SprSolver,
    y: &[f64],
    cfg: &RobustConfig,
    mut observe: impl FnMut(&DVector<f64>),
) -> Result<RobustFit> {
    cfg.validate()?;
    let n = y.len();
    let k = cfg.budget(n);
    let y_norm = y.iter().map(|v| v * v).sum::<f64>().sqrt();
    let threshold = cfg.tol * (y_norm + 1e-12);

    let mut c = vec![0.0; n];
    let mut trace = Vec::new();
    let mut converged = false;
    for _ in 0..cfg.max_iters {
        let (o, next) = robust_step(solver, y, &c, cfg.eta, k)?;
        observe(&o);
        let delta = l2_diff(&next, &c);
        trace.push(delta);
        c = next;
        if delta <= threshold {
            converged = true;
            break;
        }
    }
    let target: Vec<f64> = y.iter().zip(&c).map(|(&yi, &ci)| yi - cfg.eta * ci).collect();
    let model = solver.model(&solver.solve_coefficients(&target));
    Ok(RobustFit {
        model,
        corruption: c,
        iterations: trace.len(),
        trace,
        converged,
    })
}

/// Robust semi-parametric fit.
pub fn fit_respire(p: &FitProblem, spec: KernelSpec, cfg: &RobustConfig) -> Result<RobustFit> {
    cfg.validate()?;
    let solver = SprSolver::new(p, spec, cfg.lambda)?;
    fit_respire_with_solver(&solver, &p.y, cfg, |_| {})
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spr::fit_spr;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn hard_threshold_examples() {
        assert_eq!(hard_threshold(&[3.0, -5.0, 1.0], 1).unwrap(), vec![0.0, -5.0, 0.0]);
        assert_eq!(hard_threshold(&[3.0, -5.0, 1.0], 3).unwrap(), vec![3.0, -5.0, 1.0]);
        assert_eq!(hard_threshold(&[3.0, -5.0, 1.0], 0).unwrap(), vec![0.0; 3]);
        assert_eq!(hard_threshold(&[2.0, -2.0], 1).unwrap(), vec![2.0, 0.0]);
        assert!(hard_threshold(&[1.0], 2).is_err());
    }

    #[test]
    fn config_validation() {
        let ok = RobustConfig::default();
        assert!(ok.validate().is_ok());
        for bad in [
            RobustConfig { alpha: 0.6, ..ok },
            RobustConfig { alpha: -0.1, ..ok },
            RobustConfig { eta: 0.0, ..ok },
            RobustConfig { eta: 1.5, ..ok },
            RobustConfig { lambda: 0.0, ..ok },
            RobustConfig { max_iters: 0, ..ok },
        ] {
            assert!(bad.validate().is_err());
        }
        assert_eq!(RobustConfig { alpha: 0.05, ..ok }.budget(100), 5);
        assert_eq!(RobustConfig { alpha: 0.05, ..ok }.budget(39), 1);
    }

    fn problem(n: usize, seed: u64) -> FitProblem {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let z: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..1.0)).collect();
        let x1: Vec<f64> = (0..n).map(|_| rng.random_range(1.0..2.0)).collect();
        let x2: Vec<f64> = (0..n).map(|_| rng.random_range(1.0..2.0)).collect();
        let y: Vec<f64> = (0..n)
            .map(|i| {
                (1.0 + z[i]) * x1[i] - (0.5 * z[i] * z[i]) * x2[i]
                    + (3.0 * z[i]).sin()
                    + 0.01 * rng.random_range(-1.0..1.0)
            })
            .collect();
        FitProblem::new(x1, x2, z, y).unwrap()
    }

    #[test]
    fn alpha_zero_equals_plain_fit() {
        let p = problem(40, 1);
        let spec = KernelSpec::gaussian(0.2).unwrap();
        let cfg = RobustConfig {
            alpha: 0.0,
            eta: 0.7,
            lambda: 0.3,
            ..Default::default()
        };
        let fit = fit_respire(&p, spec, &cfg).unwrap();
        assert_eq!(fit.model, fit_spr(&p, spec, 0.3).unwrap());
        assert_eq!(fit.iterations, 1);
        assert!(fit.converged);
        assert!(fit.corruption.iter().all(|&c| c == 0.0));
    }

    #[test]
    fn trace_and_sparsity() {
        let mut p = problem(60, 2);
        p.y[10] += 50.0;
        p.y[33] -= 40.0;
        let cfg = RobustConfig {
            alpha: 0.05,
            lambda: 0.1,
            ..Default::default()
        };
        let fit = fit_respire(&p, KernelSpec::gaussian(0.2).unwrap(), &cfg).unwrap();
        assert!(!fit.trace.is_empty());
        assert_eq!(fit.trace.len(), fit.iterations);
        let nnz = fit.corruption.iter().filter(|&&c| c != 0.0).count();
        assert!(nnz <= 3);
        assert!(fit.corruption[10] > 30.0);
        assert!(fit.corruption[33] < -20.0);
    }

    #[test]
    fn planted_outlier_barely_moves_robust_fit() {
        let n = 120;
        let p = problem(n, 3);
        let spec = KernelSpec::gaussian(0.3).unwrap();
        let test = problem(50, 4);
        let ymax = p.y.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let mut dirty = p.clone();
        dirty.y[57] += 100.0 * ymax;

        let predict = |fit: &RobustFit| fit.model.predict_many(&test.x1, &test.x2, &test.z);
        let rmse = |a: &[f64], b: &[f64]| {
            (a.iter().zip(b).map(|(u, v)| (u - v) * (u - v)).sum::<f64>() / a.len() as f64).sqrt()
        };
        let robust = RobustConfig {
            alpha: 0.05,
            lambda: 1.0,
            max_iters: 200,
            tol: 1e-10,
            ..Default::default()
        };
        let plain = RobustConfig { alpha: 0.0, ..robust };

        let clean_r = predict(&fit_respire(&p, spec, &robust).unwrap());
        let dirty_r = predict(&fit_respire(&dirty, spec, &robust).unwrap());
        let clean_p = predict(&fit_respire(&p, spec, &plain).unwrap());
        let dirty_p = predict(&fit_respire(&dirty, spec, &plain).unwrap());

        // relative to the RMS magnitude of the clean robust predictions
        let base = rmse(&clean_r, &vec![0.0; clean_r.len()]);
        let robust_change = rmse(&dirty_r, &clean_r);
        let plain_change = rmse(&dirty_p, &clean_p);
        assert!(robust_change <= 0.01 * base, "{robust_change} vs {base}, plain {plain_change}");
        assert!(plain_change > robust_change);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn corruption_stays_sparse(seed in 0u64..5000, alpha in 0.0f64..0.5, eta in 0.1f64..1.0) {
            let p = problem(30, seed);
            let cfg = RobustConfig { alpha, eta, lambda: 0.2, max_iters: 10, tol: 1e-6 };
            let solver = SprSolver::new(&p, KernelSpec::gaussian(0.3).unwrap(), 0.2).unwrap();
            let k = cfg.budget(30);
            let mut c = vec![0.0; 30];
            for _ in 0..5 {
                let (_, next) = robust_step(&solver, &p.y, &c, eta, k).unwrap();
                prop_assert!(next.iter().filter(|&&v| v != 0.0).count() <= k);
                c = next;
            }
            let fit = fit_respire_with_solver(&solver, &p.y, &cfg, |_| {}).unwrap();
            prop_assert!(fit.corruption.iter().filter(|&&v| v != 0.0).count() <= k);
        }
    }
}
