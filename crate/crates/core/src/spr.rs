//! Semi-parametric regression `y ≈ w₁(z)·x₁ + w₂(z)·x₂ + b(z)`, solved in the
//! dual.
//!
//! With Gram matrix `G` over the auxiliary values and `Hᵢ = XᵢGXᵢ`, the dual
//! variable `β` minimizes `βᵀMβ + λ‖β‖² − 2λβᵀy` where `M = G + ΣHᵢ`. The
//! minimizer solves `(M + λI)β = λy`; the returned coefficients are
//! `m = X₁β/λ`, `n = X₂β/λ`, `o = β/λ`, and in-sample predictions are `Mo`.
//!
//! The linear algebra is written over an arbitrary number of covariates; only
//! the public surface fixes it at two.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SVD};

use crate::dataio::{AlignedDataset, NormParams};
use crate::error::{invalid, Error, Result};
use crate::kernels::KernelSpec;

/// Training data in the form consumed by the solvers.
#[derive(Debug, Clone, PartialEq)]
pub struct FitProblem {
    pub x1: Vec<f64>,
    pub x2: Vec<f64>,
    /// Normalized auxiliary values.
    pub z: Vec<f64>,
    pub y: Vec<f64>,
    /// Normalization that produced `z`; stored in fitted models.
    pub norm: NormParams,
}

impl FitProblem {
    pub fn new(x1: Vec<f64>, x2: Vec<f64>, z: Vec<f64>, y: Vec<f64>) -> Result<Self> {
        let p = Self {
            x1,
            x2,
            z,
            y,
            norm: NormParams::IDENTITY,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn with_norm(mut self, norm: NormParams) -> Self {
        self.norm = norm;
        self
    }

    pub fn from_dataset(ds: &AlignedDataset) -> Self {
        Self {
            x1: ds.x1.clone(),
            x2: ds.x2.clone(),
            z: ds.z.clone(),
            y: ds.y.clone(),
            norm: ds.norm,
        }
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.y.len();
        if n == 0 {
            return Err(invalid("empty fit problem"));
        }
        if self.x1.len() != n || self.x2.len() != n || self.z.len() != n {
            return Err(invalid("fit problem columns differ in length"));
        }
        let finite = |v: &[f64]| v.iter().all(|x| x.is_finite());
        if !(finite(&self.x1) && finite(&self.x2) && finite(&self.z) && finite(&self.y)) {
            return Err(invalid("fit problem contains non-finite values"));
        }
        Ok(())
    }

    pub(crate) fn covariates(&self) -> [&[f64]; 2] {
        [&self.x1, &self.x2]
    }

    pub fn with_targets(&self, y: Vec<f64>) -> Self {
        assert_eq!(y.len(), self.len());
        Self {
            y,
            ..self.clone()
        }
    }
}

/// `M = G + Σᵢ XᵢGXᵢ` for diagonal `Xᵢ` given by `covariates[i]`.
pub fn system_matrix(gram: &DMatrix<f64>, covariates: &[&[f64]]) -> DMatrix<f64> {
    let n = gram.nrows();
    DMatrix::from_fn(n, n, |i, j| {
        let scale: f64 = 1.0 + covariates.iter().map(|x| x[i] * x[j]).sum::<f64>();
        gram[(i, j)] * scale
    })
}

/// Factorized dual system for one `(problem, kernel, λ)` triple. Solving for
/// several target vectors reuses the factorization.
pub struct SprSolver {
    spec: KernelSpec,
    lambda: f64,
    z: Vec<f64>,
    covariates: Vec<Vec<f64>>,
    norm: NormParams,
    system: DMatrix<f64>,
    chol: Cholesky<f64, Dyn>,
}

impl SprSolver {
    pub fn new(p: &FitProblem, spec: KernelSpec, lambda: f64) -> Result<Self> {
        p.validate()?;
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(invalid(format!("lambda must be positive, got {lambda}")));
        }
        let gram = spec.gram(&p.z);
        let system = system_matrix(&gram, &p.covariates());
        let mut shifted = system.clone();
        for i in 0..shifted.nrows() {
            shifted[(i, i)] += lambda;
        }
        let chol = Cholesky::new(shifted).ok_or(Error::Factorization(
            "M + λI is not numerically positive definite",
        ))?;
        Ok(Self {
            spec,
            lambda,
            z: p.z.clone(),
            covariates: p.covariates().iter().map(|c| c.to_vec()).collect(),
            norm: p.norm,
            system,
            chol,
        })
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn system(&self) -> &DMatrix<f64> {
        &self.system
    }

    /// Dual solution `β` of `(M + λI)β = λ·target`.
    pub fn solve_dual(&self, target: &[f64]) -> DVector<f64> {
        let rhs = DVector::from_iterator(target.len(), target.iter().map(|&v| self.lambda * v));
        self.chol.solve(&rhs)
    }

    /// Coefficient vector `o = β/λ` for a target.
    pub fn solve_coefficients(&self, target: &[f64]) -> DVector<f64> {
        self.solve_dual(target) / self.lambda
    }

    /// In-sample predictions `M·o`.
    pub fn fitted(&self, o: &DVector<f64>) -> DVector<f64> {
        &self.system * o
    }

    /// Builds the model for coefficient vector `o`.
    pub fn model(&self, o: &DVector<f64>) -> SemiParamModel {
        let slopes = self
            .covariates
            .iter()
            .map(|x| x.iter().zip(o.iter()).map(|(a, b)| a * b).collect())
            .collect();
        SemiParamModel {
            spec: self.spec,
            lambda: self.lambda,
            z_train: self.z.clone(),
            slopes,
            bias: o.iter().copied().collect(),
            norm: self.norm,
        }
    }
}

/// A trained semi-parametric model: everything needed for inference.
#[derive(Debug, Clone, PartialEq)]
pub struct SemiParamModel {
    pub spec: KernelSpec,
    pub lambda: f64,
    pub z_train: Vec<f64>,
    /// One coefficient vector per independent variable (`m`, `n`).
    slopes: Vec<Vec<f64>>,
    /// `o`.
    bias: Vec<f64>,
    pub norm: NormParams,
}

impl SemiParamModel {
    pub fn from_parts(
        spec: KernelSpec,
        lambda: f64,
        norm: NormParams,
        z_train: Vec<f64>,
        m: Vec<f64>,
        n: Vec<f64>,
        o: Vec<f64>,
    ) -> Result<Self> {
        let len = z_train.len();
        if len == 0 {
            return Err(invalid("model needs at least one training point"));
        }
        if m.len() != len || n.len() != len || o.len() != len {
            return Err(invalid("model coefficient vectors differ in length"));
        }
        if !(lambda > 0.0) {
            return Err(invalid("model lambda must be positive"));
        }
        Ok(Self {
            spec,
            lambda,
            z_train,
            slopes: vec![m, n],
            bias: o,
            norm,
        })
    }

    /// An all-zero model over the given training auxiliary values.
    pub fn zero(spec: KernelSpec, lambda: f64, norm: NormParams, z_train: Vec<f64>) -> Self {
        let n = z_train.len();
        Self {
            spec,
            lambda,
            z_train,
            slopes: vec![vec![0.0; n]; 2],
            bias: vec![0.0; n],
            norm,
        }
    }

    pub fn len(&self) -> usize {
        self.z_train.len()
    }

    pub fn is_empty(&self) -> bool {
        self.z_train.is_empty()
    }

    pub fn m(&self) -> &[f64] {
        &self.slopes[0]
    }

    pub fn n(&self) -> &[f64] {
        &self.slopes[1]
    }

    pub fn o(&self) -> &[f64] {
        &self.bias
    }

    /// The dual variable `β = λ·o`.
    pub fn dual(&self) -> Vec<f64> {
        self.bias.iter().map(|&v| self.lambda * v).collect()
    }

    /// Indices with a nonzero coefficient in any of `m`, `n`, `o`.
    pub fn support(&self) -> Vec<usize> {
        (0..self.len())
            .filter(|&i| self.bias[i] != 0.0 || self.slopes.iter().any(|s| s[i] != 0.0))
            .collect()
    }

    /// `(w₁(z), w₂(z), b(z))` at a normalized auxiliary value.
    fn weights_normalized(&self, z: f64) -> (f64, f64, f64) {
        let k = self.spec.cross(z, &self.z_train);
        let dot = |c: &[f64]| k.iter().zip(c).map(|(a, b)| a * b).sum::<f64>();
        (dot(&self.slopes[0]), dot(&self.slopes[1]), dot(&self.bias))
    }

    /// Prediction for one raw input; `z_raw` is normalized with the model's
    /// stored parameters.
    pub fn predict(&self, x1: f64, x2: f64, z_raw: f64) -> f64 {
        let (w1, w2, b) = self.weights_normalized(self.norm.apply(z_raw));
        w1 * x1 + w2 * x2 + b
    }

    pub fn predict_many(&self, x1: &[f64], x2: &[f64], z_raw: &[f64]) -> Vec<f64> {
        x1.iter()
            .zip(x2)
            .zip(z_raw)
            .map(|((&a, &b), &z)| self.predict(a, b, z))
            .collect()
    }

    pub fn predict_dataset(&self, ds: &AlignedDataset) -> Vec<f64> {
        self.predict_many(&ds.x1, &ds.x2, &ds.z_raw)
    }

    /// Weight and bias curves over raw auxiliary values.
    pub fn weight_curves(&self, z_grid_raw: &[f64]) -> WeightCurves {
        let mut curves = WeightCurves {
            z: z_grid_raw.to_vec(),
            w1: Vec::with_capacity(z_grid_raw.len()),
            w2: Vec::with_capacity(z_grid_raw.len()),
            b: Vec::with_capacity(z_grid_raw.len()),
        };
        for &z in z_grid_raw {
            let (w1, w2, b) = self.weights_normalized(self.norm.apply(z));
            curves.w1.push(w1);
            curves.w2.push(w2);
            curves.b.push(b);
        }
        curves
    }
}

/// `w₁`, `w₂` and `b` sampled on a grid of raw auxiliary values.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightCurves {
    pub z: Vec<f64>,
    pub w1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b: Vec<f64>,
}

/// Closed-form dual solve.
pub fn fit_spr(p: &FitProblem, spec: KernelSpec, lambda: f64) -> Result<SemiParamModel> {
    let solver = SprSolver::new(p, spec, lambda)?;
    Ok(solver.model(&solver.solve_coefficients(&p.y)))
}

/// `βᵀMβ + λ‖β‖² − 2λβᵀy`.
pub fn dual_objective(p: &FitProblem, spec: KernelSpec, lambda: f64, beta: &[f64]) -> Result<f64> {
    p.validate()?;
    if beta.len() != p.len() {
        return Err(invalid("beta has the wrong length"));
    }
    let m = system_matrix(&spec.gram(&p.z), &p.covariates());
    let b = DVector::from_column_slice(beta);
    let y = DVector::from_column_slice(&p.y);
    Ok(b.dot(&(&m * &b)) + lambda * b.norm_squared() - 2.0 * lambda * b.dot(&y))
}

/// Indices of the `k` largest-magnitude entries; ties go to the lower index.
/// Returned in ascending index order.
pub fn top_k_indices(v: &[f64], k: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..v.len()).collect();
    order.sort_by(|&a, &b| v[b].abs().total_cmp(&v[a].abs()).then(a.cmp(&b)));
    order.truncate(k);
    order.sort_unstable();
    order
}

/// Sparsifies a model to its `n_keep` most influential dual coordinates and
/// refits the retained coordinates by least squares against the full model's
/// in-sample predictions.
pub fn compress(model: &SemiParamModel, p: &FitProblem, n_keep: usize) -> Result<SemiParamModel> {
    p.validate()?;
    let n = p.len();
    if model.len() != n || model.z_train != p.z {
        return Err(invalid("fit problem does not match the model's training data"));
    }
    if n_keep == 0 || n_keep > n {
        return Err(invalid(format!("n_keep must be in 1..={n}, got {n_keep}")));
    }
    let support = top_k_indices(model.o(), n_keep);
    let system = system_matrix(&model.spec.gram(&p.z), &p.covariates());
    let o_full = DVector::from_column_slice(model.o());
    let target = &system * &o_full;

    // Ridge-regularized refit, anchored at the thresholded coefficients:
    // min ‖t − M_S γ‖² + ρ‖γ − o_S‖², solved for δ = γ − o_S by SVD.
    let rho = 1e-8 * system.trace() / n as f64;
    let cols = system.select_columns(support.iter());
    let anchor = DVector::from_iterator(n_keep, support.iter().map(|&i| model.o()[i]));
    let resid = &target - &cols * &anchor;
    let svd = SVD::new(cols, true, true);
    let (u, v_t) = match (svd.u, svd.v_t) {
        (Some(u), Some(v_t)) => (u, v_t),
        _ => return Err(Error::Factorization("SVD of the retained columns failed")),
    };
    let proj = u.transpose() * &resid;
    let shrunk = DVector::from_iterator(
        proj.len(),
        proj.iter()
            .zip(svd.singular_values.iter())
            .map(|(&c, &s)| if s > 0.0 { c * s / (s * s + rho) } else { 0.0 }),
    );
    let gamma = anchor + v_t.transpose() * shrunk;

    let mut o = DVector::zeros(n);
    for (slot, &idx) in support.iter().enumerate() {
        o[idx] = gamma[slot];
    }
    let slopes: Vec<Vec<f64>> = p
        .covariates()
        .iter()
        .map(|x| x.iter().zip(o.iter()).map(|(a, b)| a * b).collect())
        .collect();
    Ok(SemiParamModel {
        spec: model.spec,
        lambda: model.lambda,
        z_train: p.z.clone(),
        slopes,
        bias: o.iter().copied().collect(),
        norm: model.norm,
    })
}
