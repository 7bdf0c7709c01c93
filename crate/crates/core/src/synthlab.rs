//! Synthetic laboratory: instances generated under the recovery theorem's
//! assumptions, corruption-recovery experiments, brute-force checks of the
//! eigenvalue and PSD-closure lemmas, and a generator of realistic field
//! datasets for pipeline tests.

use chrono::{TimeZone, Utc};
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use rayon::prelude::*;

use crate::dataio::AlignedDataset;
use crate::error::{invalid, Error, Result};
use crate::kernels::KernelSpec;
use crate::robust::{fit_respire_with_solver, RobustConfig};
use crate::spr::{system_matrix, FitProblem, SprSolver};

/// Parameters of a theorem-regime instance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthSpec {
    pub n_points: usize,
    /// Number of leading eigenvectors of `F` spanning `β*`.
    pub s: usize,
    /// Corruption sparsity.
    pub k: usize,
    /// Lower bound of the independent covariates.
    pub r: f64,
    /// Upper bound of the independent covariates.
    pub big_r: f64,
    /// Gaussian bandwidth.
    pub h: f64,
    pub noise_sigma: f64,
    /// Corruption magnitude relative to `‖y*‖∞`.
    pub corruption_scale: f64,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            n_points: 400,
            s: 5,
            k: 20,
            r: 1.0,
            big_r: 2.0,
            h: 0.5,
            noise_sigma: 0.0,
            corruption_scale: 1.0,
            seed: 0,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_points == 0 {
            return Err(invalid("n_points must be positive"));
        }
        if self.s == 0 || self.s > self.n_points {
            return Err(invalid("s must lie in 1..=N"));
        }
        if self.k > self.n_points {
            return Err(invalid("k must not exceed N"));
        }
        if !(self.r > 0.0 && self.r <= self.big_r) {
            return Err(invalid("covariate bounds need 0 < r <= R"));
        }
        if !(self.h > 0.0) || !(self.noise_sigma >= 0.0) || !(self.corruption_scale > 0.0) {
            return Err(invalid("h and corruption_scale must be positive, noise_sigma >= 0"));
        }
        Ok(())
    }
}

/// A generated instance together with its ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthInstance {
    pub problem: FitProblem,
    pub beta_star: Vec<f64>,
    /// Sorted indices of the corrupted targets.
    pub corruption_support: Vec<usize>,
    /// The planted corruption `b`.
    pub corruption: Vec<f64>,
    /// `y* = Fβ*`.
    pub y_clean: Vec<f64>,
    /// Benign noise `e*`.
    pub noise: Vec<f64>,
}

impl SynthInstance {
    pub fn kernel(spec: &SynthSpec) -> KernelSpec {
        KernelSpec::gaussian(spec.h).expect("validated bandwidth")
    }

    pub fn noise_norm(&self) -> f64 {
        self.noise.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

/// Draws an instance `y = Fβ* + b + e*` with `F = X₁GX₁ + X₂GX₂ + G`.
pub fn generate(spec: &SynthSpec) -> Result<SynthInstance> {
    spec.validate()?;
    let n = spec.n_points;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let z: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..1.0)).collect();
    let x1: Vec<f64> = (0..n).map(|_| rng.random_range(spec.r..=spec.big_r)).collect();
    let x2: Vec<f64> = (0..n).map(|_| rng.random_range(spec.r..=spec.big_r)).collect();

    let kernel = SynthInstance::kernel(spec);
    let f = system_matrix(&kernel.gram(&z), &[&x1, &x2]);
    let (vs, _) = top_eigenspace(f.clone(), spec.s)?;
    let mix: Vec<f64> = (0..spec.s).map(|_| StandardNormal.sample(&mut rng)).collect();
    let mut beta = &vs * DVector::from_vec(mix);
    let norm = beta.norm();
    if norm == 0.0 {
        return Err(invalid("degenerate β* draw"));
    }
    beta /= norm;

    let y_clean = &f * &beta;
    let ymax = y_clean.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let mut support: Vec<usize> = sample(&mut rng, n, spec.k).into_vec();
    support.sort_unstable();
    let mut corruption = vec![0.0; n];
    for &i in &support {
        let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
        corruption[i] = sign * spec.corruption_scale * ymax;
    }
    let noise: Vec<f64> = if spec.noise_sigma > 0.0 {
        let dist = Normal::new(0.0, spec.noise_sigma).map_err(|e| invalid(e.to_string()))?;
        (0..n).map(|_| dist.sample(&mut rng)).collect()
    } else {
        vec![0.0; n]
    };
    let y: Vec<f64> = (0..n).map(|i| y_clean[i] + corruption[i] + noise[i]).collect();

    Ok(SynthInstance {
        problem: FitProblem::new(x1, x2, z, y)?,
        beta_star: beta.iter().copied().collect(),
        corruption_support: support,
        corruption,
        y_clean: y_clean.iter().copied().collect(),
        noise,
    })
}

/// Additive accuracy target of the recovery experiment.
pub const RECOVERY_EPSILON: f64 = 1e-4;
/// Noise amplification constant of the recovery guarantee.
pub const NOISE_CONSTANT: f64 = 7.0;

/// Result of one robust-recovery run.
#[derive(Debug, Clone, PartialEq)]
pub struct RecoveryReport {
    pub seed: u64,
    pub lambda: f64,
    /// `‖β̂_t − β*‖₂` per iteration, where `β̂_t` is the coefficient vector `o_t`.
    pub errors: Vec<f64>,
    /// Error of the model returned after the final refit.
    pub final_error: f64,
    pub noise_norm: f64,
    /// `final_error < ε + 7‖e*‖₂`.
    pub recovered: bool,
    /// Support of the final corruption estimate equals the planted support.
    pub support_recovered: bool,
    pub iterations: usize,
    pub converged: bool,
}

impl RecoveryReport {
    /// Whether consecutive errors shrink by at least `ratio` from iteration
    /// `skip` on, for as long as the error is still above `floor`.
    pub fn decays_geometrically(&self, ratio: f64, skip: usize, floor: f64) -> bool {
        self.errors
            .windows(2)
            .skip(skip)
            .filter(|w| w[1] > floor)
            .all(|w| w[1] <= ratio * w[0])
    }
}

/// Default ridge for theorem-regime runs: `1e−8·trace(F)/N`.
pub fn theorem_lambda(problem: &FitProblem, kernel: KernelSpec) -> f64 {
    let f = system_matrix(&kernel.gram(&problem.z), &[&problem.x1, &problem.x2]);
    1e-8 * f.trace() / problem.len() as f64
}

/// Model update used inside the corruption loop of a recovery run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InnerFit {
    /// The production semi-parametric ridge fit; `None` picks
    /// [`theorem_lambda`].
    Ridge { lambda: Option<f64> },
    /// Least squares restricted to the span of the top `s` eigenvectors of
    /// `F`: `β̂ = V_s Λ_s⁻¹ V_sᵀ (y − ηc)`, fitted values `V_s V_sᵀ (y − ηc)`.
    Eigenspace,
}

/// Runs the robust loop on a generated instance with sparsity budget `k`
/// (`α = k/N`) and tracks the distance of every iterate to `β*`.
pub fn recovery_experiment(
    spec: &SynthSpec,
    inner: InnerFit,
    eta: f64,
    max_iters: usize,
) -> Result<RecoveryReport> {
    let inst = generate(spec)?;
    recovery_on_instance(spec, &inst, inner, eta, max_iters)
}

/// Convergence tolerance of recovery runs, relative to `‖y‖₂`.
const RECOVERY_TOL: f64 = 1e-15;

pub fn recovery_on_instance(
    spec: &SynthSpec,
    inst: &SynthInstance,
    inner: InnerFit,
    eta: f64,
    max_iters: usize,
) -> Result<RecoveryReport> {
    let n = spec.n_points;
    let kernel = SynthInstance::kernel(spec);
    let beta_star = DVector::from_column_slice(&inst.beta_star);
    let y = &inst.problem.y;
    let mut errors = Vec::new();
    let (lambda, final_o, corruption, iterations, converged) = match inner {
        InnerFit::Ridge { lambda } => {
            let lambda = lambda.unwrap_or_else(|| theorem_lambda(&inst.problem, kernel));
            let solver = SprSolver::new(&inst.problem, kernel, lambda)?;
            let cfg = RobustConfig {
                alpha: spec.k as f64 / n as f64,
                eta,
                lambda,
                max_iters,
                tol: RECOVERY_TOL,
            };
            let fit = fit_respire_with_solver(&solver, y, &cfg, |o| {
                errors.push((o - &beta_star).norm());
            })?;
            let o = DVector::from_column_slice(fit.model.o());
            (lambda, o, fit.corruption, fit.iterations, fit.converged)
        }
        InnerFit::Eigenspace => {
            if !(eta > 0.0 && eta <= 1.0) || max_iters == 0 {
                return Err(invalid("eta must lie in (0, 1] and max_iters must be positive"));
            }
            let f = system_matrix(&kernel.gram(&inst.problem.z), &[&inst.problem.x1, &inst.problem.x2]);
            let (vs, values) = top_eigenspace(f, spec.s)?;
            if values.iter().any(|&v| !(v > 0.0)) {
                return Err(invalid("top eigenvalues of F must be positive"));
            }
            let inv = values.map(|v| 1.0 / v);
            let solve = |target: &DVector<f64>| {
                let coef = vs.tr_mul(target);
                (&vs * coef.component_mul(&inv), &vs * coef)
            };
            let yv = DVector::from_column_slice(y);
            let threshold = RECOVERY_TOL * (yv.norm() + 1e-12);
            let mut c = DVector::zeros(n);
            let mut iterations = 0;
            let mut converged = false;
            while iterations < max_iters {
                iterations += 1;
                let (beta, fitted) = solve(&(&yv - &c * eta));
                errors.push((beta - &beta_star).norm());
                let resid: Vec<f64> = (&yv - fitted).iter().copied().collect();
                let next = DVector::from_vec(crate::robust::hard_threshold(&resid, spec.k)?);
                let delta = (&next - &c).norm();
                c = next;
                if delta <= threshold {
                    converged = true;
                    break;
                }
            }
            let (beta, _) = solve(&(&yv - &c * eta));
            (0.0, beta, c.iter().copied().collect(), iterations, converged)
        }
    };
    let final_error = (final_o - &beta_star).norm();
    let noise_norm = inst.noise_norm();
    let estimated: Vec<usize> = (0..n).filter(|&i| corruption[i] != 0.0).collect();
    Ok(RecoveryReport {
        seed: spec.seed,
        lambda,
        errors,
        final_error,
        noise_norm,
        recovered: final_error < RECOVERY_EPSILON + NOISE_CONSTANT * noise_norm,
        support_recovered: estimated == inst.corruption_support,
        iterations,
        converged,
    })
}

/// Top-`s` eigenvectors of a symmetric matrix (as columns) and their
/// eigenvalues.
fn top_eigenspace(f: DMatrix<f64>, s: usize) -> Result<(DMatrix<f64>, DVector<f64>)> {
    let n = f.nrows();
    let eig = SymmetricEigen::try_new(f, f64::EPSILON, 0)
        .ok_or(Error::Factorization("eigendecomposition of F did not converge"))?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let cols = &order[..s];
    let vs = eig.eigenvectors.select_columns(cols.iter());
    let values = DVector::from_iterator(s, cols.iter().map(|&j| eig.eigenvalues[j]));
    Ok((vs, values))
}

/// Outcome of a randomized lemma check.
#[derive(Debug, Clone, PartialEq)]
pub struct LemmaReport {
    pub name: &'static str,
    pub trials: usize,
    /// Number of individual inequality checks performed.
    pub checks: usize,
    /// `(trial, description)` for every failed check.
    pub violations: Vec<(usize, String)>,
}

impl LemmaReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

fn trial_rng(seed: u64, trial: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial as u64);
    rng
}

/// Random PSD matrix `UUᵀ` with `U` of random rank in `0..=dim`.
fn random_psd(rng: &mut ChaCha8Rng, dim: usize) -> DMatrix<f64> {
    let rank = rng.random_range(0..=dim);
    let u = DMatrix::<f64>::from_fn(dim, rank, |_, _| StandardNormal.sample(rng));
    &u * u.transpose()
}

/// Eigenvalues in descending order.
fn eigenvalues_desc(m: &DMatrix<f64>) -> Vec<f64> {
    let mut ev: Vec<f64> = SymmetricEigen::new(m.clone()).eigenvalues.iter().copied().collect();
    ev.sort_by(|a, b| b.total_cmp(a));
    ev
}

fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    eigenvalues_desc(m).last().copied().unwrap_or(0.0)
}

/// `s`-th largest eigenvalue, 1-based.
fn lambda_s(m: &DMatrix<f64>, s: usize) -> f64 {
    eigenvalues_desc(m)[s - 1]
}

/// All `k`-subsets of `0..n` in lexicographic order.
fn subsets(n: usize, k: usize) -> Vec<Vec<usize>> {
    fn rec(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            if n - i < k - cur.len() {
                break;
            }
            cur.push(i);
            rec(i + 1, n, k, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(0, n, k, &mut Vec::with_capacity(k), &mut out);
    out
}

/// Largest eigenvalue over all principal `k×k` submatrices, by enumeration.
pub fn max_principal_eigenvalue(m: &DMatrix<f64>, k: usize) -> f64 {
    subsets(m.nrows(), k)
        .iter()
        .map(|idx| {
            let sub = m.select_rows(idx.iter()).select_columns(idx.iter());
            eigenvalues_desc(&sub)[0]
        })
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Sums and Hadamard products of random PSD pairs stay PSD.
pub fn check_psd_closure(trials: usize, dim: usize, seed: u64) -> LemmaReport {
    let tol = -1e-8 * dim as f64;
    let violations: Vec<(usize, String)> = (0..trials)
        .into_par_iter()
        .flat_map_iter(|t| {
            let mut rng = trial_rng(seed, t);
            let a = random_psd(&mut rng, dim);
            let b = random_psd(&mut rng, dim);
            let sum = min_eigenvalue(&(&a + &b));
            let had = min_eigenvalue(&a.component_mul(&b));
            let mut v = Vec::new();
            if sum < tol {
                v.push((t, format!("min eig(A+B) = {sum:e}")));
            }
            if had < tol {
                v.push((t, format!("min eig(A∘B) = {had:e}")));
            }
            v
        })
        .collect();
    LemmaReport {
        name: "psd-closure",
        trials,
        checks: 2 * trials,
        violations,
    }
}

/// Checks the four eigenvalue inequalities for sums and diagonal scalings of
/// random PSD matrices, for every `s ≤ max_s` and `k ≤ max_k`.
pub fn check_eigen_bounds(
    trials: usize,
    dim: usize,
    max_k: usize,
    max_s: usize,
    seed: u64,
) -> Result<LemmaReport> {
    if dim == 0 || dim > 8 {
        return Err(invalid("eigen-bound checks support 1 <= dim <= 8"));
    }
    if max_k == 0 || max_k > 3.min(dim) || max_s == 0 || max_s > 3.min(dim) {
        return Err(invalid("k and s must lie in 1..=min(3, dim)"));
    }
    const SLACK: f64 = 1e-9;
    let results: Vec<(usize, Vec<(usize, String)>)> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = trial_rng(seed, t);
            let a = random_psd(&mut rng, dim);
            let b = random_psd(&mut rng, dim);
            let d_diag: Vec<f64> = (0..dim).map(|_| rng.random_range(0.2..3.0)).collect();
            let d = DMatrix::from_diagonal(&DVector::from_vec(d_diag.clone()));
            let dad = &d * &a * &d;
            let sum = &a + &b;
            let d_min = d_diag.iter().copied().fold(f64::INFINITY, f64::min);
            let mut checks = 0;
            let mut bad = Vec::new();
            for s in 1..=max_s {
                checks += 2;
                let lhs = lambda_s(&sum, s);
                let rhs = lambda_s(&a, s).max(lambda_s(&b, s));
                if lhs < rhs - SLACK {
                    bad.push((t, format!("λ_{s}(A+B) = {lhs:e} < {rhs:e}")));
                }
                let lhs = lambda_s(&dad, s);
                let rhs = lambda_s(&a, s) * d_min * d_min;
                if lhs < rhs - SLACK {
                    bad.push((t, format!("λ_{s}(DAD) = {lhs:e} < {rhs:e}")));
                }
            }
            for k in 1..=max_k {
                checks += 2;
                let lhs = max_principal_eigenvalue(&sum, k);
                let rhs = max_principal_eigenvalue(&a, k) + max_principal_eigenvalue(&b, k);
                if lhs > rhs + SLACK {
                    bad.push((t, format!("Λ_{k}(A+B) = {lhs:e} > {rhs:e}")));
                }
                let lhs = max_principal_eigenvalue(&dad, k);
                let dk = max_principal_eigenvalue(&d, k);
                let rhs = max_principal_eigenvalue(&a, k) * dk * dk;
                if lhs > rhs + SLACK {
                    bad.push((t, format!("Λ_{k}(DAD) = {lhs:e} > {rhs:e}")));
                }
            }
            (checks, bad)
        })
        .collect();
    Ok(LemmaReport {
        name: "eigen-bounds",
        trials,
        checks: results.iter().map(|r| r.0).sum(),
        violations: results.into_iter().flat_map(|r| r.1).collect(),
    })
}

/// Parameters of a synthetic field deployment: an electrochemical CO cell
/// whose zero offset and sensitivity drift with temperature.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FieldSpec {
    pub n_points: usize,
    pub cadence_secs: i64,
    /// Unix time of the first record.
    pub start_unix: i64,
    /// Mean ambient temperature (°C) and the diurnal swing amplitude.
    pub temp_mean: f64,
    pub temp_swing: f64,
    /// Standard deviation of the reference noise (ppm).
    pub ref_noise: f64,
    /// Standard deviation of the electrode noise (mV).
    pub op_noise: f64,
    pub seed: u64,
}

impl Default for FieldSpec {
    fn default() -> Self {
        Self {
            n_points: 400,
            cadence_secs: 900,
            start_unix: 1_672_531_200, // 2023-01-01T00:00:00Z
            temp_mean: 25.0,
            temp_swing: 6.0,
            ref_noise: 0.02,
            op_noise: 0.3,
            seed: 0,
        }
    }
}

/// Sensitivity of the working electrode (mV/ppm) at temperature `t` (°C).
fn sensitivity(t: f64) -> f64 {
    60.0 * (1.0 + 0.012 * (t - 25.0) + 0.0004 * (t - 25.0).powi(2))
}

/// Generates aligned readings `(OP₁, OP₂, T, CO)`.
///
/// The auxiliary electrode tracks the temperature-dependent zero offset; the
/// working electrode adds a temperature-dependent sensitivity times CO.
/// CO is positive with a mean around 1 ppm.
pub fn field_dataset(spec: &FieldSpec) -> Result<AlignedDataset> {
    if spec.n_points < 2 || spec.cadence_secs <= 0 {
        return Err(invalid("field dataset needs >= 2 points and a positive cadence"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let ref_noise = Normal::new(0.0, spec.ref_noise).map_err(|e| invalid(e.to_string()))?;
    let op_noise = Normal::new(0.0, spec.op_noise).map_err(|e| invalid(e.to_string()))?;
    let day = 86_400.0;
    let phase: f64 = rng.random_range(0.0..std::f64::consts::TAU);
    let mut slow = 0.0f64;
    let (mut t, mut x1, mut x2, mut z, mut y) = (vec![], vec![], vec![], vec![], vec![]);
    for i in 0..spec.n_points {
        let secs = spec.start_unix + i as i64 * spec.cadence_secs;
        let frac = (i as i64 * spec.cadence_secs) as f64 / day;
        let temp = spec.temp_mean
            + spec.temp_swing * (std::f64::consts::TAU * frac + phase).sin()
            + 0.5 * rng.random_range(-1.0..1.0);
        // AR(1) log-concentration with a rush-hour bump
        let step: f64 = StandardNormal.sample(&mut rng);
        slow = 0.97 * slow + 0.08 * step;
        let rush = 0.6 * (std::f64::consts::TAU * 2.0 * frac).sin().max(0.0);
        let co = 0.8 * (slow + rush).exp();
        let offset = 180.0 + 2.5 * (temp - 25.0) + 0.05 * (temp - 25.0).powi(2);
        let op2 = offset + op_noise.sample(&mut rng);
        let op1 = 40.0 + 1.1 * offset + sensitivity(temp) * co + op_noise.sample(&mut rng);
        t.push(
            Utc.timestamp_opt(secs, 0)
                .single()
                .ok_or_else(|| invalid("timestamp out of range"))?,
        );
        x1.push(op1);
        x2.push(op2);
        z.push(temp);
        y.push(co + ref_noise.sample(&mut rng));
    }
    AlignedDataset::new(t, x1, x2, z, y)
}

/// Adds `magnitude` to a random `frac` of the targets in `range`. Returns the
/// modified dataset and the sorted corrupted indices.
pub fn plant_outliers(
    ds: &AlignedDataset,
    range: std::ops::Range<usize>,
    frac: f64,
    magnitude: f64,
    seed: u64,
) -> (AlignedDataset, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let len = range.len();
    let count = ((frac * len as f64) + 1e-9).floor() as usize;
    let mut idx: Vec<usize> = sample(&mut rng, len, count)
        .into_iter()
        .map(|i| i + range.start)
        .collect();
    idx.sort_unstable();
    let mut y = ds.y.clone();
    for &i in &idx {
        y[i] += magnitude;
    }
    (ds.with_targets(y), idx)
}

/// Randomly permutes the targets in `range`.
pub fn shuffle_targets(ds: &AlignedDataset, range: std::ops::Range<usize>, seed: u64) -> AlignedDataset {
    use rand::seq::SliceRandom;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut y = ds.y.clone();
    y[range].shuffle(&mut rng);
    ds.with_targets(y)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spr::fit_spr;

    fn small(seed: u64) -> SynthSpec {
        SynthSpec {
            n_points: 60,
            s: 3,
            k: 0,
            seed,
            ..Default::default()
        }
    }

    #[test]
    fn noiseless_uncorrupted_instance_is_self_consistent() {
        let spec = small(1);
        let inst = generate(&spec).unwrap();
        assert_eq!(inst.problem.y, inst.y_clean);
        let kernel = SynthInstance::kernel(&spec);
        let lambda = theorem_lambda(&inst.problem, kernel);
        let model = fit_spr(&inst.problem, kernel, lambda).unwrap();
        let pred = model.predict_many(&inst.problem.x1, &inst.problem.x2, &inst.problem.z);
        let num: f64 = pred.iter().zip(&inst.y_clean).map(|(a, b)| (a - b) * (a - b)).sum();
        let den: f64 = inst.y_clean.iter().map(|v| v * v).sum();
        assert!((num / den).sqrt() <= 1e-6);
    }

    #[test]
    fn full_span_instance_still_matches_f_beta() {
        let spec = SynthSpec {
            n_points: 20,
            s: 20,
            k: 3,
            ..small(2)
        };
        let inst = generate(&spec).unwrap();
        let f = system_matrix(
            &SynthInstance::kernel(&spec).gram(&inst.problem.z),
            &[&inst.problem.x1, &inst.problem.x2],
        );
        let y = &f * DVector::from_column_slice(&inst.beta_star);
        assert_eq!(y.as_slice(), inst.y_clean.as_slice());
        assert_eq!(inst.corruption_support.len(), 3);
        let norm: f64 = inst.beta_star.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!((norm - 1.0).abs() < 1e-12);
    }

    #[test]
    fn generation_is_deterministic() {
        let spec = SynthSpec {
            noise_sigma: 0.1,
            k: 5,
            ..small(3)
        };
        assert_eq!(generate(&spec).unwrap(), generate(&spec).unwrap());
        let other = SynthSpec { seed: 4, ..spec };
        assert_ne!(generate(&spec).unwrap(), generate(&other).unwrap());
    }

    #[test]
    fn f_is_psd() {
        for seed in 0..5 {
            let spec = small(seed);
            let inst = generate(&spec).unwrap();
            let f = system_matrix(
                &SynthInstance::kernel(&spec).gram(&inst.problem.z),
                &[&inst.problem.x1, &inst.problem.x2],
            );
            assert!(min_eigenvalue(&f) >= -1e-8 * spec.n_points as f64);
        }
    }

    #[test]
    fn zero_corruption_recovers_immediately() {
        let spec = small(5);
        let rep = recovery_experiment(&spec, InnerFit::Ridge { lambda: None }, 1.0, 50).unwrap();
        assert_eq!(rep.iterations, 1);
        assert!(rep.recovered, "{rep:?}");
    }

    #[test]
    fn eigenspace_loop_recovers_exactly_without_noise() {
        let spec = SynthSpec {
            n_points: 120,
            s: 3,
            k: 6,
            seed: 9,
            ..Default::default()
        };
        let rep = recovery_experiment(&spec, InnerFit::Eigenspace, 1.0, 100).unwrap();
        assert!(rep.recovered && rep.support_recovered, "{rep:?}");
        assert!(rep.final_error < 1e-10);
        assert!(rep.decays_geometrically(0.9, 2, RECOVERY_EPSILON));
    }

    #[test]
    fn ridge_loop_stalls_at_the_corrupted_coefficients() {
        // With η = 1 the ridge loop's corruption update reads c ← HT(c + λo),
        // so any fixed point has o = 0 on the corrupted coordinates and the
        // error is at least ‖β*_S‖.
        let spec = SynthSpec {
            n_points: 120,
            s: 3,
            k: 6,
            seed: 9,
            ..Default::default()
        };
        let inst = generate(&spec).unwrap();
        let rep = recovery_on_instance(&spec, &inst, InnerFit::Ridge { lambda: None }, 1.0, 300).unwrap();
        assert!(rep.support_recovered);
        let floor: f64 = inst.corruption_support.iter().map(|&i| inst.beta_star[i].powi(2)).sum::<f64>().sqrt();
        assert!(rep.final_error >= 0.99 * floor, "{} vs {floor}", rep.final_error);
        assert!(floor > 1e-2);
    }

    #[test]
    fn invalid_specs_rejected() {
        assert!(generate(&SynthSpec { s: 0, ..small(0) }).is_err());
        assert!(generate(&SynthSpec { k: 61, ..small(0) }).is_err());
        assert!(generate(&SynthSpec { r: 3.0, ..small(0) }).is_err());
        assert!(check_eigen_bounds(1, 9, 1, 1, 0).is_err());
        assert!(check_eigen_bounds(1, 4, 4, 1, 0).is_err());
    }

    #[test]
    fn lemma_trivial_cases() {
        let i = DMatrix::<f64>::identity(4, 4);
        assert!(min_eigenvalue(&i.component_mul(&i)) >= 0.0);
        let zero = DMatrix::<f64>::zeros(4, 4);
        assert!(min_eigenvalue(&(&zero + &zero)) >= 0.0);
        // A = B = I: λ_s(2I) = 2 >= 1, Λ_k(2I) = 2 = 1 + 1
        assert_eq!(max_principal_eigenvalue(&(&i + &i), 2), 2.0);
        assert_eq!(lambda_s(&(&i + &i), 1), 2.0);
        // D = I leaves DAD = A
        let a = DMatrix::from_row_slice(3, 3, &[2.0, 1.0, 0.0, 1.0, 2.0, 0.5, 0.0, 0.5, 1.0]);
        let d = DMatrix::<f64>::identity(3, 3);
        assert_eq!(&d * &a * &d, a);
        assert_eq!(subsets(4, 2).len(), 6);
        assert_eq!(subsets(8, 3).len(), 56);
    }

    #[test]
    fn small_lemma_runs_pass() {
        assert!(check_psd_closure(50, 6, 1).passed());
        assert!(check_eigen_bounds(20, 6, 3, 3, 2).unwrap().passed());
    }

    #[test]
    fn field_dataset_is_plausible() {
        let ds = field_dataset(&FieldSpec::default()).unwrap();
        assert_eq!(ds.len(), 400);
        let mean = ds.y.iter().sum::<f64>() / ds.len() as f64;
        assert!(mean > 0.3 && mean < 3.0, "{mean}");
        assert!(ds.z_raw.iter().all(|&t| t > 10.0 && t < 40.0));
        assert_eq!(field_dataset(&FieldSpec::default()).unwrap(), ds);
    }

    #[test]
    fn planting_and_shuffling() {
        let ds = field_dataset(&FieldSpec { n_points: 100, ..Default::default() }).unwrap();
        let (dirty, idx) = plant_outliers(&ds, 0..80, 0.05, 10.0, 3);
        assert_eq!(idx.len(), 4);
        assert!(idx.iter().all(|&i| i < 80));
        for i in 0..100 {
            let expected = if idx.contains(&i) { ds.y[i] + 10.0 } else { ds.y[i] };
            assert_eq!(dirty.y[i], expected);
        }
        let shuffled = shuffle_targets(&ds, 0..80, 4);
        assert_eq!(&shuffled.y[80..], &ds.y[80..]);
        let mut a = shuffled.y[..80].to_vec();
        let mut b = ds.y[..80].to_vec();
        a.sort_by(f64::total_cmp);
        b.sort_by(f64::total_cmp);
        assert_eq!(a, b);
    }
}
