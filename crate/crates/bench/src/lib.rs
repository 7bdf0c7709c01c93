//! Shared fixtures for the benchmarks.

use respire::dataio::temporal_split;
use respire::kernels::lengthscale_candidates_1d;
use respire::synthlab::{field_dataset, FieldSpec};
use respire::{AlignedDataset, FitProblem, KernelSpec};

/// Normalized training split of `n` synthetic records.
pub fn train_split(n: usize) -> AlignedDataset {
    let ds = field_dataset(&FieldSpec {
        n_points: (n as f64 / 0.8).ceil() as usize,
        seed: 7,
        ..FieldSpec::default()
    })
    .expect("synthetic data");
    temporal_split(&ds, 0.8).expect("split").0
}

/// Training problem and a mid-range Gaussian kernel.
pub fn problem(n: usize) -> (FitProblem, KernelSpec) {
    let train = train_split(n);
    let ls = lengthscale_candidates_1d(&train.z, &[0.5]).expect("length scale")[0];
    (FitProblem::from_dataset(&train), KernelSpec::gaussian(ls).expect("kernel"))
}
