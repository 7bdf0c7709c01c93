//! Outlier-resistant semi-parametric kernel regression for calibrating
//! electrochemical CO sensors.
//!
//! The model predicts `y ≈ w₁(z)·x₁ + w₂(z)·x₂ + b(z)` where `x₁, x₂` are the
//! sensor's operating potentials and the weights vary non-parametrically with
//! temperature `z`. Robust training alternates closed-form dual solves with
//! hard thresholding of residuals to estimate sparse gross corruptions.

pub mod baselines;
pub mod dataio;
pub mod error;
pub mod evaluation;
pub mod kernels;
pub mod model_io;
pub mod robust;
pub mod spr;
pub mod synthlab;
pub mod transfer;
pub mod tuning;

pub use dataio::{AlignedDataset, NormParams};
pub use error::{Error, Result};
pub use kernels::{KernelFamily, KernelSpec};
pub use spr::{compress, dual_objective, fit_spr, FitProblem, SemiParamModel, SprSolver};
