//! Stationary kernels over the scalar auxiliary variable (temperature).
//!
//! All kernels here are unit-amplitude: `k(z, z) = 1` and values lie in `(0, 1]`.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;

use crate::error::{invalid, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum KernelFamily {
    Gaussian,
    Matern12,
    Matern32,
    Matern52,
}

impl KernelFamily {
    pub const ALL: [KernelFamily; 4] = [
        KernelFamily::Gaussian,
        KernelFamily::Matern12,
        KernelFamily::Matern32,
        KernelFamily::Matern52,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            KernelFamily::Gaussian => "gaussian",
            KernelFamily::Matern12 => "matern-1/2",
            KernelFamily::Matern32 => "matern-3/2",
            KernelFamily::Matern52 => "matern-5/2",
        }
    }
}

impl fmt::Display for KernelFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for KernelFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "gaussian" | "rbf" => Ok(KernelFamily::Gaussian),
            "matern-1/2" | "matern12" | "exponential" => Ok(KernelFamily::Matern12),
            "matern-3/2" | "matern32" => Ok(KernelFamily::Matern32),
            "matern-5/2" | "matern52" => Ok(KernelFamily::Matern52),
            other => Err(invalid(format!("unknown kernel family `{other}`"))),
        }
    }
}

/// Kernel family plus length scale.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelSpec {
    pub family: KernelFamily,
    length_scale: f64,
}

impl KernelSpec {
    pub fn new(family: KernelFamily, length_scale: f64) -> Result<Self> {
        if !(length_scale > 0.0 && length_scale.is_finite()) {
            return Err(invalid(format!(
                "length scale must be positive and finite, got {length_scale}"
            )));
        }
        Ok(Self {
            family,
            length_scale,
        })
    }

    pub fn gaussian(length_scale: f64) -> Result<Self> {
        Self::new(KernelFamily::Gaussian, length_scale)
    }

    pub fn length_scale(&self) -> f64 {
        self.length_scale
    }

    /// Evaluates `k(a, b)`.
    pub fn eval(&self, a: f64, b: f64) -> f64 {
        self.eval_distance((a - b).abs())
    }

    /// Kernel value at Euclidean distance `dist ≥ 0`.
    pub fn eval_distance(&self, dist: f64) -> f64 {
        let d = dist / self.length_scale;
        match self.family {
            KernelFamily::Gaussian => (-0.5 * d * d).exp(),
            KernelFamily::Matern12 => (-d).exp(),
            KernelFamily::Matern32 => {
                let s = 3f64.sqrt() * d;
                (1.0 + s) * (-s).exp()
            }
            KernelFamily::Matern52 => {
                let s = 5f64.sqrt() * d;
                (1.0 + s + s * s / 3.0) * (-s).exp()
            }
        }
    }

    /// Gram matrix `G[i][j] = k(z_i, z_j)`. Exactly symmetric with unit diagonal.
    pub fn gram(&self, zs: &[f64]) -> DMatrix<f64> {
        let n = zs.len();
        let mut g = DMatrix::zeros(n, n);
        for j in 0..n {
            g[(j, j)] = 1.0;
            for i in (j + 1)..n {
                let v = self.eval(zs[i], zs[j]);
                g[(i, j)] = v;
                g[(j, i)] = v;
            }
        }
        g
    }

    /// Kernel values of `z_new` against every training value.
    pub fn cross(&self, z_new: f64, zs: &[f64]) -> Vec<f64> {
        zs.iter().map(|&z| self.eval(z_new, z)).collect()
    }
}

/// Type-1 (inverse empirical CDF) quantile of an ascending-sorted, non-empty slice.
pub(crate) fn lower_quantile(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    let rank = (q * n as f64).ceil() as usize;
    sorted[rank.clamp(1, n) - 1]
}

/// Length-scale candidates from the distribution of pairwise Euclidean distances.
///
/// For every requested quantile the lower (type-1) quantile of
/// `{‖x_i − x_j‖ : i < j}` is returned; a zero result is replaced by the
/// smallest positive pairwise distance.
pub fn lengthscale_candidates(features: &[Vec<f64>], quantiles: &[f64]) -> Result<Vec<f64>> {
    if features.len() < 2 {
        return Err(invalid("length-scale heuristic needs at least two points"));
    }
    if let Some(q) = quantiles.iter().find(|&&q| !(q > 0.0 && q < 1.0)) {
        return Err(invalid(format!("quantile {q} outside (0, 1)")));
    }
    let dim = features[0].len();
    if features.iter().any(|f| f.len() != dim) {
        return Err(invalid("feature vectors differ in dimension"));
    }
    let n = features.len();
    let mut dists = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in (i + 1)..n {
            let d2: f64 = features[i]
                .iter()
                .zip(&features[j])
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            dists.push(d2.sqrt());
        }
    }
    dists.sort_by(f64::total_cmp);
    let min_positive = dists
        .iter()
        .copied()
        .find(|&d| d > 0.0)
        .ok_or_else(|| invalid("all points identical; no positive pairwise distance"))?;
    Ok(quantiles
        .iter()
        .map(|&q| {
            let d = lower_quantile(&dists, q);
            if d > 0.0 {
                d
            } else {
                min_positive
            }
        })
        .collect())
}

/// Convenience wrapper for scalar features.
pub fn lengthscale_candidates_1d(zs: &[f64], quantiles: &[f64]) -> Result<Vec<f64>> {
    let feats: Vec<Vec<f64>> = zs.iter().map(|&z| vec![z]).collect();
    lengthscale_candidates(&feats, quantiles)
}
