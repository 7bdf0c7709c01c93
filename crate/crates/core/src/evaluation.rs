//! Metrics and diagnostics: R², robust R², win counts, weight-curve
//! smoothness and the paired t-test.

use std::collections::BTreeMap;
use std::io::Write;

use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{invalid, Error, Result};
use crate::spr::SemiParamModel;

/// Coefficient of determination `1 − SSres/SStot`.
pub fn r2(y: &[f64], yhat: &[f64]) -> Result<f64> {
    if y.len() != yhat.len() {
        return Err(invalid("r2: length mismatch"));
    }
    if y.len() < 2 {
        return Err(invalid("r2 needs at least two points"));
    }
    let mean = y.iter().sum::<f64>() / y.len() as f64;
    let ss_tot: f64 = y.iter().map(|v| (v - mean) * (v - mean)).sum();
    if ss_tot <= 0.0 {
        return Err(Error::ZeroVariance("r2 targets"));
    }
    let ss_res: f64 = y.iter().zip(yhat).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok(1.0 - ss_res / ss_tot)
}

/// R² after excluding the `⌈δ·n⌉` points with the largest absolute residual
/// (ties to the lower index). The mean is recomputed on the retained points.
pub fn robust_r2(y: &[f64], yhat: &[f64], delta: f64) -> Result<f64> {
    if y.len() != yhat.len() {
        return Err(invalid("robust_r2: length mismatch"));
    }
    if !(0.0..1.0).contains(&delta) {
        return Err(invalid(format!("delta must lie in [0, 1), got {delta}")));
    }
    let n = y.len();
    let drop = ((delta * n as f64) - 1e-9).ceil().max(0.0) as usize;
    if n < drop + 2 {
        return Err(invalid("robust_r2 leaves fewer than two points"));
    }
    let mut order: Vec<usize> = (0..n).collect();
    let abs_res = |i: usize| (y[i] - yhat[i]).abs();
    order.sort_by(|&a, &b| abs_res(b).total_cmp(&abs_res(a)).then(a.cmp(&b)));
    let mut keep: Vec<usize> = order[drop..].to_vec();
    keep.sort_unstable();
    let ys: Vec<f64> = keep.iter().map(|&i| y[i]).collect();
    let hs: Vec<f64> = keep.iter().map(|&i| yhat[i]).collect();
    r2(&ys, &hs)
}

/// Per-method count of experiments in which the method scored within
/// `epsilon` of the best score. `scores` maps experiment → method → score;
/// non-finite scores count as missing.
pub fn win_counts(
    scores: &BTreeMap<String, BTreeMap<String, f64>>,
    epsilon: f64,
) -> BTreeMap<String, usize> {
    let mut wins: BTreeMap<String, usize> = BTreeMap::new();
    for row in scores.values() {
        for method in row.keys() {
            wins.entry(method.clone()).or_insert(0);
        }
        let best = row
            .values()
            .copied()
            .filter(|v| v.is_finite())
            .fold(f64::NEG_INFINITY, f64::max);
        if !best.is_finite() {
            continue;
        }
        for (method, &score) in row {
            if score.is_finite() && score >= best - epsilon {
                *wins.get_mut(method).unwrap() += 1;
            }
        }
    }
    wins
}

/// Total variation divided by range; 1 for monotone curves, larger for
/// curves that reverse direction.
pub fn smoothness_index(curve: &[f64]) -> Result<f64> {
    if curve.len() < 2 {
        return Err(invalid("smoothness index needs at least two samples"));
    }
    let max = curve.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = curve.iter().copied().fold(f64::INFINITY, f64::min);
    let range = max - min;
    if range < 1e-12 * (1.0 + max.abs()) {
        return Ok(1.0);
    }
    let tv: f64 = curve.windows(2).map(|w| (w[1] - w[0]).abs()).sum();
    Ok(tv / range)
}

/// Default smoothness threshold above which a curve is flagged.
pub const DEFAULT_OVERFIT_TAU: f64 = 3.0;
/// Number of grid points the diagnostic samples.
pub const DIAGNOSTIC_GRID: usize = 200;

#[derive(Debug, Clone, PartialEq)]
pub struct OverfitReport {
    /// Smoothness indices of `w₁`, `w₂` and `b`.
    pub indices: [f64; 3],
    pub tau: f64,
    pub flagged: bool,
}

/// Uniform grid of `points` raw auxiliary values spanning the model's
/// training range.
pub fn training_range_grid(model: &SemiParamModel, points: usize) -> Vec<f64> {
    let lo = model.z_train.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = model.z_train.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let (lo, hi) = (model.norm.invert(lo), model.norm.invert(hi));
    if points == 1 {
        return vec![lo];
    }
    (0..points)
        .map(|i| lo + (hi - lo) * i as f64 / (points - 1) as f64)
        .collect()
}

/// Flags a model whose weight or bias curves oscillate over the training
/// temperature range.
pub fn overfit_flag(model: &SemiParamModel, tau: f64) -> Result<OverfitReport> {
    let grid = training_range_grid(model, DIAGNOSTIC_GRID);
    let curves = model.weight_curves(&grid);
    let indices = [
        smoothness_index(&curves.w1)?,
        smoothness_index(&curves.w2)?,
        smoothness_index(&curves.b)?,
    ];
    Ok(OverfitReport {
        indices,
        tau,
        flagged: indices.iter().any(|&v| v > tau),
    })
}

/// Paired two-sided t-test on `a − b`. Returns `(t, p)`.
///
/// All-zero differences give `(0, 1)`; zero spread with a nonzero mean gives
/// `(±∞, 0)`.
pub fn paired_ttest(a: &[f64], b: &[f64]) -> Result<(f64, f64)> {
    if a.len() != b.len() {
        return Err(invalid("paired t-test: length mismatch"));
    }
    let n = a.len();
    if n < 2 {
        return Err(invalid("paired t-test needs at least two pairs"));
    }
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    if d.iter().all(|&v| v == 0.0) {
        return Ok((0.0, 1.0));
    }
    let mean = d.iter().sum::<f64>() / n as f64;
    let var = d.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
    if var == 0.0 {
        return Ok((f64::INFINITY.copysign(mean), 0.0));
    }
    let t = mean / (var / n as f64).sqrt();
    let dist = StudentsT::new(0.0, 1.0, (n - 1) as f64)
        .map_err(|e| invalid(format!("t distribution: {e}")))?;
    let p = (2.0 * dist.sf(t.abs())).min(1.0);
    Ok((t, p))
}

/// Default deltas for the robust-R² curve.
pub const DEFAULT_DELTAS: [f64; 7] = [0.0, 0.01, 0.02, 0.05, 0.1, 0.15, 0.2];

/// Evaluation of one method on one dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub method_id: String,
    pub dataset_id: String,
    pub r2: f64,
    /// `(δ, R²(δ))` with strictly increasing δ.
    pub robust_curve: Vec<(f64, f64)>,
    pub residuals: Vec<f64>,
    pub n: usize,
}

impl EvalReport {
    pub fn new(
        method_id: &str,
        dataset_id: &str,
        y: &[f64],
        yhat: &[f64],
        deltas: &[f64],
    ) -> Result<Self> {
        if deltas.windows(2).any(|w| w[0] >= w[1]) {
            return Err(invalid("robust-R² deltas must be strictly increasing"));
        }
        let robust_curve = deltas
            .iter()
            .map(|&d| robust_r2(y, yhat, d).map(|v| (d, v)))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            method_id: method_id.to_string(),
            dataset_id: dataset_id.to_string(),
            r2: r2(y, yhat)?,
            robust_curve,
            residuals: y.iter().zip(yhat).map(|(a, b)| a - b).collect(),
            n: y.len(),
        })
    }

    pub fn robust_at(&self, delta: f64) -> Option<f64> {
        self.robust_curve
            .iter()
            .find(|(d, _)| (d - delta).abs() < 1e-12)
            .map(|&(_, v)| v)
    }

    /// Human-readable block.
    pub fn summary(&self) -> String {
        let mut s = format!(
            "method {} on {}: n = {}, R² = {:.4}\n",
            self.method_id, self.dataset_id, self.n, self.r2
        );
        for (d, v) in &self.robust_curve {
            s.push_str(&format!("  robust R² (δ = {d:.2}) = {v:.4}\n"));
        }
        s
    }

    pub fn write_curve_csv<W: Write>(&self, sink: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(sink);
        w.write_record(["delta", "r2"])?;
        for (d, v) in &self.robust_curve {
            w.write_record([d.to_string(), v.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}
