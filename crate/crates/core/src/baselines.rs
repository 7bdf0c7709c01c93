//! Comparison methods for the transfer experiments: linear ridge regression
//! and Gaussian kernel ridge regression on standardized `(x₁, x₂, z)`.

use nalgebra::{DMatrix, DVector};

use crate::dataio::AlignedDataset;
use crate::error::{Error, Result};
use crate::kernels::{lengthscale_candidates, KernelSpec};
use crate::tuning::{kfold_splits, CvMetric};

/// Per-feature centering and scaling fit on a training split.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Standardizer {
    pub mean: [f64; 3],
    pub scale: [f64; 3],
}

fn raw_features(ds: &AlignedDataset) -> Vec<[f64; 3]> {
    (0..ds.len()).map(|i| [ds.x1[i], ds.x2[i], ds.z_raw[i]]).collect()
}

impl Standardizer {
    pub fn fit(rows: &[[f64; 3]]) -> Self {
        let n = rows.len() as f64;
        let mut mean = [0.0; 3];
        let mut scale = [1.0; 3];
        for j in 0..3 {
            mean[j] = rows.iter().map(|r| r[j]).sum::<f64>() / n;
            let var = rows.iter().map(|r| (r[j] - mean[j]).powi(2)).sum::<f64>() / n;
            if var > 0.0 {
                scale[j] = var.sqrt();
            }
        }
        Self { mean, scale }
    }

    pub fn apply(&self, r: &[f64; 3]) -> [f64; 3] {
        std::array::from_fn(|j| (r[j] - self.mean[j]) / self.scale[j])
    }

    fn transform(&self, ds: &AlignedDataset) -> Vec<[f64; 3]> {
        raw_features(ds).iter().map(|r| self.apply(r)).collect()
    }
}

/// Linear ridge regression with an unpenalized intercept.
#[derive(Debug, Clone, PartialEq)]
pub struct RidgeModel {
    pub standardizer: Standardizer,
    pub weights: [f64; 3],
    pub intercept: f64,
    pub lambda: f64,
}

impl RidgeModel {
    /// Minimizes `‖y − ȳ − Xw‖² + λ‖w‖²` on standardized features.
    pub fn fit(train: &AlignedDataset, lambda: f64) -> Result<Self> {
        let st = Standardizer::fit(&raw_features(train));
        let rows = st.transform(train);
        let n = rows.len();
        let ybar = train.y.iter().sum::<f64>() / n as f64;
        let x = DMatrix::from_fn(n, 3, |i, j| rows[i][j]);
        let yc = DVector::from_iterator(n, train.y.iter().map(|v| v - ybar));
        let mut a = x.tr_mul(&x);
        for j in 0..3 {
            a[(j, j)] += lambda;
        }
        let w = a
            .cholesky()
            .ok_or(Error::Factorization("ridge normal equations are not positive definite"))?
            .solve(&x.tr_mul(&yc));
        Ok(Self {
            standardizer: st,
            weights: [w[0], w[1], w[2]],
            intercept: ybar,
            lambda,
        })
    }

    pub fn predict(&self, ds: &AlignedDataset) -> Vec<f64> {
        self.standardizer
            .transform(ds)
            .iter()
            .map(|r| self.intercept + (0..3).map(|j| self.weights[j] * r[j]).sum::<f64>())
            .collect()
    }
}

/// Kernel ridge regression on standardized features with centered targets.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelRidgeModel {
    pub standardizer: Standardizer,
    pub spec: KernelSpec,
    pub lambda: f64,
    support: Vec<[f64; 3]>,
    coef: Vec<f64>,
    intercept: f64,
}

fn dist(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    (0..3).map(|j| (a[j] - b[j]).powi(2)).sum::<f64>().sqrt()
}

impl KernelRidgeModel {
    /// Length scale is the `q`-quantile of pairwise standardized distances.
    pub fn fit(train: &AlignedDataset, q: f64, lambda: f64) -> Result<Self> {
        let st = Standardizer::fit(&raw_features(train));
        let rows = st.transform(train);
        let feats: Vec<Vec<f64>> = rows.iter().map(|r| r.to_vec()).collect();
        let spec = KernelSpec::gaussian(lengthscale_candidates(&feats, &[q])?[0])?;
        let n = rows.len();
        let ybar = train.y.iter().sum::<f64>() / n as f64;
        let mut k = DMatrix::zeros(n, n);
        for j in 0..n {
            k[(j, j)] = 1.0 + lambda;
            for i in (j + 1)..n {
                let v = spec.eval_distance(dist(&rows[i], &rows[j]));
                k[(i, j)] = v;
                k[(j, i)] = v;
            }
        }
        let yc = DVector::from_iterator(n, train.y.iter().map(|v| v - ybar));
        let coef = k
            .cholesky()
            .ok_or(Error::Factorization("kernel ridge system is not positive definite"))?
            .solve(&yc);
        Ok(Self {
            standardizer: st,
            spec,
            lambda,
            support: rows,
            coef: coef.iter().copied().collect(),
            intercept: ybar,
        })
    }

    pub fn predict(&self, ds: &AlignedDataset) -> Vec<f64> {
        self.standardizer
            .transform(ds)
            .iter()
            .map(|r| {
                self.intercept
                    + self
                        .support
                        .iter()
                        .zip(&self.coef)
                        .map(|(s, c)| c * self.spec.eval_distance(dist(r, s)))
                        .sum::<f64>()
            })
            .collect()
    }
}

/// Returns the candidate with the best mean holdout score (earliest on ties).
fn cv_select<C: Copy, M>(
    train: &AlignedDataset,
    candidates: &[C],
    folds: usize,
    metric: CvMetric,
    fit: impl Fn(&AlignedDataset, C) -> Result<M>,
    predict: impl Fn(&M, &AlignedDataset) -> Vec<f64>,
) -> Result<C> {
    let splits = kfold_splits(train.len(), folds)?;
    let parts: Vec<_> = splits
        .iter()
        .map(|f| (train.subset(&f.fit), train.subset(&f.holdout)))
        .collect();
    let mut best: Option<(C, f64)> = None;
    for &c in candidates {
        let scores: Option<Vec<f64>> = parts
            .iter()
            .map(|(fit_part, hold)| {
                let m = fit(fit_part, c).ok()?;
                metric.score(&hold.y, &predict(&m, hold)).ok().filter(|v| v.is_finite())
            })
            .collect();
        if let Some(s) = scores {
            let mean = s.iter().sum::<f64>() / s.len() as f64;
            if best.as_ref().is_none_or(|(_, b)| mean > *b) {
                best = Some((c, mean));
            }
        }
    }
    best.map(|(c, _)| c).ok_or(Error::AllCellsFailed)
}

/// Ridge with `λ` chosen by contiguous k-fold CV.
pub fn tune_ridge(train: &AlignedDataset, lambdas: &[f64], folds: usize, metric: CvMetric) -> Result<RidgeModel> {
    let lambda = cv_select(train, lambdas, folds, metric, RidgeModel::fit, RidgeModel::predict)?;
    RidgeModel::fit(train, lambda)
}

/// Kernel ridge with `(q, λ)` chosen by contiguous k-fold CV.
pub fn tune_kernel_ridge(
    train: &AlignedDataset,
    quantiles: &[f64],
    lambdas: &[f64],
    folds: usize,
    metric: CvMetric,
) -> Result<KernelRidgeModel> {
    let cells: Vec<(f64, f64)> = quantiles
        .iter()
        .flat_map(|&q| lambdas.iter().map(move |&l| (q, l)))
        .collect();
    let (q, l) = cv_select(
        train,
        &cells,
        folds,
        metric,
        |d, (q, l)| KernelRidgeModel::fit(d, q, l),
        KernelRidgeModel::predict,
    )?;
    KernelRidgeModel::fit(train, q, l)
}
