//! Hyperparameter grids and contiguous k-fold cross-validation on a training
//! split.

use std::io::Write;

use rayon::prelude::*;

use crate::dataio::AlignedDataset;
use crate::error::{invalid, Error, Result};
use crate::evaluation::{r2, robust_r2};
use crate::kernels::{lengthscale_candidates_1d, KernelFamily, KernelSpec};
use crate::robust::{fit_respire_with_solver, RobustConfig, RobustFit};
use crate::spr::{FitProblem, SprSolver};

pub const DEFAULT_FOLDS: usize = 3;

#[derive(Debug, Clone, PartialEq)]
pub struct HyperGrid {
    pub alphas: Vec<f64>,
    /// Quantiles of the pairwise auxiliary distances used as length scales.
    pub q_ls: Vec<f64>,
    pub etas: Vec<f64>,
    pub lambdas: Vec<f64>,
    pub families: Vec<KernelFamily>,
}

impl Default for HyperGrid {
    fn default() -> Self {
        Self {
            alphas: vec![0.0, 0.05, 0.1, 0.15, 0.2],
            q_ls: vec![0.1, 0.3, 0.5, 0.7, 0.9],
            etas: vec![0.1, 0.4, 0.7, 1.0],
            lambdas: vec![0.1, 0.5, 1.0, 5.0, 10.0],
            families: vec![KernelFamily::Gaussian],
        }
    }
}

/// One point of the grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridCell {
    pub family: KernelFamily,
    pub alpha: f64,
    pub q_ls: f64,
    pub eta: f64,
    pub lambda: f64,
}

impl HyperGrid {
    /// Grid with a single cell.
    pub fn single(cell: GridCell) -> Self {
        Self {
            alphas: vec![cell.alpha],
            q_ls: vec![cell.q_ls],
            etas: vec![cell.eta],
            lambdas: vec![cell.lambda],
            families: vec![cell.family],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.alphas.is_empty()
            || self.q_ls.is_empty()
            || self.etas.is_empty()
            || self.lambdas.is_empty()
            || self.families.is_empty()
        {
            return Err(invalid("every hyperparameter set must be non-empty"));
        }
        if let Some(a) = self.alphas.iter().find(|a| !(0.0..=0.5).contains(*a)) {
            return Err(invalid(format!("alpha {a} outside [0, 0.5]")));
        }
        if let Some(q) = self.q_ls.iter().find(|q| !(**q > 0.0 && **q < 1.0)) {
            return Err(invalid(format!("length-scale quantile {q} outside (0, 1)")));
        }
        if let Some(e) = self.etas.iter().find(|e| !(**e > 0.0 && **e <= 1.0)) {
            return Err(invalid(format!("eta {e} outside (0, 1]")));
        }
        if let Some(l) = self.lambdas.iter().find(|l| !(**l > 0.0 && l.is_finite())) {
            return Err(invalid(format!("lambda {l} must be positive")));
        }
        Ok(())
    }

    /// Cells in search order: family, then alpha, q_ls, eta, lambda, each in
    /// the order given (ascending for the defaults).
    pub fn cells(&self) -> Vec<GridCell> {
        let mut out = Vec::with_capacity(self.len());
        for &family in &self.families {
            for &alpha in &self.alphas {
                for &q_ls in &self.q_ls {
                    for &eta in &self.etas {
                        for &lambda in &self.lambdas {
                            out.push(GridCell {
                                family,
                                alpha,
                                q_ls,
                                eta,
                                lambda,
                            });
                        }
                    }
                }
            }
        }
        out
    }

    pub fn len(&self) -> usize {
        self.families.len() * self.alphas.len() * self.q_ls.len() * self.etas.len() * self.lambdas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Holdout score maximized by the search.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum CvMetric {
    #[default]
    R2,
    /// R² after dropping the given fraction of largest holdout residuals.
    /// Useful when the training split itself carries gross outliers, which
    /// otherwise dominate every holdout score.
    RobustR2(f64),
}

impl CvMetric {
    pub fn score(self, y: &[f64], yhat: &[f64]) -> Result<f64> {
        match self {
            CvMetric::R2 => r2(y, yhat),
            CvMetric::RobustR2(delta) => robust_r2(y, yhat, delta),
        }
    }
}

/// Fit and holdout indices of one fold.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Fold {
    pub fit: Vec<usize>,
    pub holdout: Vec<usize>,
}

/// `k` contiguous blocks; the first `N mod k` blocks take one extra record.
pub fn kfold_splits(n: usize, k: usize) -> Result<Vec<Fold>> {
    if k < 2 {
        return Err(invalid("k-fold needs k >= 2"));
    }
    if n < k {
        return Err(Error::TooSmall(format!("{n} records cannot form {k} folds")));
    }
    let (base, extra) = (n / k, n % k);
    let mut folds = Vec::with_capacity(k);
    let mut start = 0;
    for i in 0..k {
        let end = start + base + usize::from(i < extra);
        folds.push(Fold {
            fit: (0..start).chain(end..n).collect(),
            holdout: (start..end).collect(),
        });
        start = end;
    }
    Ok(folds)
}

/// Cross-validation outcome of one cell.
#[derive(Debug, Clone, PartialEq)]
pub struct CvRow {
    pub cell: GridCell,
    /// Holdout R² per fold; `None` where the fold failed.
    pub fold_r2: Vec<Option<f64>>,
    pub mean_r2: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TuneResult {
    pub best: GridCell,
    pub best_r2: f64,
    /// Robust-loop settings of the best cell.
    pub config: RobustConfig,
    /// Kernel with the length scale resolved on the full training split.
    pub kernel: KernelSpec,
    pub table: Vec<CvRow>,
}

impl TuneResult {
    /// Refits the selected configuration on the whole training split.
    pub fn fit(&self, train: &AlignedDataset) -> Result<RobustFit> {
        let p = FitProblem::from_dataset(train);
        let solver = SprSolver::new(&p, self.kernel, self.config.lambda)?;
        fit_respire_with_solver(&solver, &p.y, &self.config, |_| {})
    }

    /// Per-cell CV table: `family,alpha,q_ls,eta,lambda,fold_1..fold_k,mean_r2`.
    /// Failed entries are left empty.
    pub fn write_cv_csv<W: Write>(&self, sink: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(sink);
        let k = self.table.first().map_or(0, |r| r.fold_r2.len());
        let mut header: Vec<String> = ["family", "alpha", "q_ls", "eta", "lambda"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        header.extend((1..=k).map(|i| format!("fold_{i}")));
        header.push("mean_r2".into());
        w.write_record(&header)?;
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for row in &self.table {
            let c = row.cell;
            let mut rec = vec![
                c.family.to_string(),
                c.alpha.to_string(),
                c.q_ls.to_string(),
                c.eta.to_string(),
                c.lambda.to_string(),
            ];
            rec.extend(row.fold_r2.iter().map(|&v| opt(v)));
            rec.push(opt(row.mean_r2));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Fit portion (self-normalized) and holdout (normalized with the fit range).
fn fold_data(train: &AlignedDataset, fold: &Fold) -> (AlignedDataset, AlignedDataset) {
    let fit = train.subset(&fold.fit).self_normalized();
    let holdout = train.subset(&fold.holdout).with_norm(fit.norm);
    (fit, holdout)
}

/// Exhaustive grid search by mean holdout R² over `k` contiguous folds.
///
/// `base` supplies the loop settings that are not tuned (`max_iters`, `tol`).
/// Ties go to the earliest cell in [`HyperGrid::cells`] order.
pub fn grid_search(
    train: &AlignedDataset,
    grid: &HyperGrid,
    k: usize,
    base: &RobustConfig,
) -> Result<TuneResult> {
    grid_search_with(train, grid, k, base, CvMetric::R2)
}

/// [`grid_search`] with an explicit holdout metric.
pub fn grid_search_with(
    train: &AlignedDataset,
    grid: &HyperGrid,
    k: usize,
    base: &RobustConfig,
    metric: CvMetric,
) -> Result<TuneResult> {
    grid.validate()?;
    if let CvMetric::RobustR2(d) = metric {
        if !(0.0..1.0).contains(&d) {
            return Err(invalid(format!("robust CV fraction {d} outside [0, 1)")));
        }
    }
    let folds = kfold_splits(train.len(), k)?;
    let data: Vec<(AlignedDataset, AlignedDataset)> = folds.iter().map(|f| fold_data(train, f)).collect();

    // One factorization per (fold, family, q_ls, lambda); alpha and eta only
    // change the loop.
    let mut units = Vec::new();
    for fi in 0..folds.len() {
        for &family in &grid.families {
            for &q in &grid.q_ls {
                for &lambda in &grid.lambdas {
                    units.push((fi, family, q, lambda));
                }
            }
        }
    }
    let scores: Vec<Vec<((KernelFamily, u64, u64, u64, u64), usize, Option<f64>)>> = units
        .par_iter()
        .map(|&(fi, family, q, lambda)| {
            let (fit, holdout) = &data[fi];
            let solver = lengthscale_candidates_1d(&fit.z, &[q])
                .and_then(|ls| KernelSpec::new(family, ls[0]))
                .and_then(|spec| SprSolver::new(&FitProblem::from_dataset(fit), spec, lambda));
            let mut out = Vec::new();
            for &alpha in &grid.alphas {
                for &eta in &grid.etas {
                    let key = (family, alpha.to_bits(), q.to_bits(), eta.to_bits(), lambda.to_bits());
                    let score = solver.as_ref().ok().and_then(|s| {
                        let cfg = RobustConfig {
                            alpha,
                            eta,
                            lambda,
                            ..*base
                        };
                        let fit_res = fit_respire_with_solver(s, &fit.y, &cfg, |_| {}).ok()?;
                        let pred = fit_res.model.predict_dataset(holdout);
                        metric.score(&holdout.y, &pred).ok().filter(|v| v.is_finite())
                    });
                    out.push((key, fi, score));
                }
            }
            out
        })
        .collect();

    let mut by_key = std::collections::HashMap::new();
    for (key, fi, score) in scores.into_iter().flatten() {
        by_key.entry(key).or_insert_with(|| vec![None; folds.len()])[fi] = score;
    }
    let table: Vec<CvRow> = grid
        .cells()
        .into_iter()
        .map(|cell| {
            let key = (
                cell.family,
                cell.alpha.to_bits(),
                cell.q_ls.to_bits(),
                cell.eta.to_bits(),
                cell.lambda.to_bits(),
            );
            let fold_r2 = by_key.remove(&key).unwrap_or_else(|| vec![None; folds.len()]);
            let mean_r2 = fold_r2
                .iter()
                .copied()
                .collect::<Option<Vec<f64>>>()
                .map(|v| v.iter().sum::<f64>() / v.len() as f64);
            CvRow { cell, fold_r2, mean_r2 }
        })
        .collect();

    let mut best: Option<(usize, f64)> = None;
    for (i, row) in table.iter().enumerate() {
        if let Some(m) = row.mean_r2 {
            if best.is_none_or(|(_, b)| m > b) {
                best = Some((i, m));
            }
        }
    }
    let (idx, best_r2) = best.ok_or(Error::AllCellsFailed)?;
    let cell = table[idx].cell;
    let ls = lengthscale_candidates_1d(&train.clone().self_normalized().z, &[cell.q_ls])?[0];
    Ok(TuneResult {
        best: cell,
        best_r2,
        config: RobustConfig {
            alpha: cell.alpha,
            eta: cell.eta,
            lambda: cell.lambda,
            ..*base
        },
        kernel: KernelSpec::new(cell.family, ls)?,
        table,
    })
}
