//! Prediction adapters, sensor-to-sensor input maps and the transfer
//! scenario harness.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::baselines::{tune_kernel_ridge, tune_ridge, KernelRidgeModel, RidgeModel};
use crate::dataio::{temporal_split, AlignedDataset};
use crate::error::{invalid, Error, Result};
use crate::evaluation::{r2, robust_r2};
use crate::robust::RobustConfig;
use crate::spr::SemiParamModel;
use crate::tuning::{grid_search_with, CvMetric, HyperGrid, DEFAULT_FOLDS};

/// Affine correction `a·ŷ + b` from model output to reference readings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Adapter {
    pub a: f64,
    pub b: f64,
}

impl Adapter {
    pub const IDENTITY: Adapter = Adapter { a: 1.0, b: 0.0 };

    /// Least-squares fit of `truth ≈ a·predictions + b`. Near-constant
    /// predictions give `a = 0, b = mean(truth)`.
    pub fn fit(predictions: &[f64], truth: &[f64]) -> Result<Self> {
        if predictions.len() != truth.len() {
            return Err(invalid("adapter inputs differ in length"));
        }
        let n = predictions.len();
        if n < 2 {
            return Err(Error::TooSmall("adapter needs at least two points".into()));
        }
        let nf = n as f64;
        let mp = predictions.iter().sum::<f64>() / nf;
        let mt = truth.iter().sum::<f64>() / nf;
        let var_p = predictions.iter().map(|p| (p - mp).powi(2)).sum::<f64>() / nf;
        let var_t = truth.iter().map(|t| (t - mt).powi(2)).sum::<f64>() / nf;
        if var_p < 1e-12 * var_t + 1e-24 {
            return Ok(Self { a: 0.0, b: mt });
        }
        let cov = predictions
            .iter()
            .zip(truth)
            .map(|(p, t)| (p - mp) * (t - mt))
            .sum::<f64>()
            / nf;
        let a = cov / var_p;
        Ok(Self { a, b: mt - a * mp })
    }

    pub fn apply(&self, predictions: &[f64]) -> Vec<f64> {
        predictions.iter().map(|p| self.a * p + self.b).collect()
    }
}

/// Affine map `A·op + d` from one sensor's operating potentials to another's.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SensorMap {
    pub a: [[f64; 2]; 2],
    pub d: [f64; 2],
}

impl SensorMap {
    pub const IDENTITY: SensorMap = SensorMap {
        a: [[1.0, 0.0], [0.0, 1.0]],
        d: [0.0, 0.0],
    };

    /// Per-output least squares `source ≈ A·target + d`; rank-deficient
    /// designs get the minimum-norm solution.
    pub fn fit(target: &[[f64; 2]], source: &[[f64; 2]]) -> Result<Self> {
        if target.len() != source.len() {
            return Err(invalid("sensor map inputs differ in length"));
        }
        let n = target.len();
        if n < 3 {
            return Err(Error::TooSmall(format!("sensor map needs >= 3 paired rows, got {n}")));
        }
        let design = DMatrix::from_fn(n, 3, |i, j| if j < 2 { target[i][j] } else { 1.0 });
        let svd = design.svd(true, true);
        let smax = svd.singular_values.max();
        let eps = smax * n as f64 * f64::EPSILON;
        let mut map = SensorMap {
            a: [[0.0; 2]; 2],
            d: [0.0; 2],
        };
        for out in 0..2 {
            let rhs = DVector::from_iterator(n, source.iter().map(|r| r[out]));
            let coef = svd.solve(&rhs, eps).map_err(|e| invalid(e.to_string()))?;
            map.a[out] = [coef[0], coef[1]];
            map.d[out] = coef[2];
        }
        Ok(map)
    }

    pub fn apply_row(&self, op: [f64; 2]) -> [f64; 2] {
        std::array::from_fn(|r| self.a[r][0] * op[0] + self.a[r][1] * op[1] + self.d[r])
    }

    pub fn apply(&self, ops: &[[f64; 2]]) -> Vec<[f64; 2]> {
        ops.iter().map(|&op| self.apply_row(op)).collect()
    }

    /// Copy of `ds` with its operating potentials mapped.
    pub fn apply_dataset(&self, ds: &AlignedDataset) -> AlignedDataset {
        let mapped = self.apply(&ops(ds));
        ds.with_ops(mapped.iter().map(|r| r[0]).collect(), mapped.iter().map(|r| r[1]).collect())
    }
}

fn ops(ds: &AlignedDataset) -> Vec<[f64; 2]> {
    ds.x1.iter().zip(&ds.x2).map(|(&a, &b)| [a, b]).collect()
}

/// Relation between the source and target datasets of a transfer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ScenarioKind {
    /// Same site, same season.
    SS,
    /// Same site, different season.
    SX,
    /// Different site, same season.
    XS,
    /// Different site, different season.
    XX,
}

impl ScenarioKind {
    /// Derives the kind from `SITE-SEASON` identifiers.
    pub fn from_ids(source: &str, target: &str) -> Result<Self> {
        let parse = |id: &str| -> Result<(String, String)> {
            match id.split_once('-') {
                Some((site, season)) if !site.is_empty() && !season.is_empty() && !season.contains('-') => {
                    Ok((site.to_string(), season.to_string()))
                }
                _ => Err(invalid(format!("dataset id {id:?} is not of the form SITE-SEASON"))),
            }
        };
        let (s_site, s_season) = parse(source)?;
        let (t_site, t_season) = parse(target)?;
        Ok(match (s_site == t_site, s_season == t_season) {
            (true, true) => ScenarioKind::SS,
            (true, false) => ScenarioKind::SX,
            (false, true) => ScenarioKind::XS,
            (false, false) => ScenarioKind::XX,
        })
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ScenarioKind::SS => "SS",
            ScenarioKind::SX => "SX",
            ScenarioKind::XS => "XS",
            ScenarioKind::XX => "XX",
        }
    }
}

impl fmt::Display for ScenarioKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Calibration methods compared in the transfer experiments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    Respire,
    /// Linear ridge regression on standardized `(x₁, x₂, z)`.
    Rr,
    /// Gaussian kernel ridge regression on standardized `(x₁, x₂, z)`.
    Krr,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Respire, Method::Rr, Method::Krr];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Respire => "RESPIRE",
            Method::Rr => "RR",
            Method::Krr => "KRR",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| invalid(format!("unknown method {s:?} (expected RESPIRE, RR or KRR)")))
    }
}

/// Settings shared by every training run of the harness.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainOptions {
    pub grid: HyperGrid,
    pub folds: usize,
    pub base: RobustConfig,
    pub metric: CvMetric,
    pub train_frac: f64,
}

impl Default for TrainOptions {
    fn default() -> Self {
        Self {
            grid: HyperGrid::default(),
            folds: DEFAULT_FOLDS,
            base: RobustConfig::default(),
            metric: CvMetric::R2,
            train_frac: 0.8,
        }
    }
}

/// A fitted model of any method.
#[derive(Debug, Clone, PartialEq)]
pub enum TrainedModel {
    Respire(SemiParamModel),
    Ridge(RidgeModel),
    KernelRidge(KernelRidgeModel),
}

impl TrainedModel {
    /// Trains `method` on `train`, with hyperparameters from CV on `train`.
    pub fn train(method: Method, train: &AlignedDataset, opts: &TrainOptions) -> Result<Self> {
        let g = &opts.grid;
        Ok(match method {
            Method::Respire => {
                let tuned = grid_search_with(train, g, opts.folds, &opts.base, opts.metric)?;
                TrainedModel::Respire(tuned.fit(train)?.model)
            }
            Method::Rr => TrainedModel::Ridge(tune_ridge(train, &g.lambdas, opts.folds, opts.metric)?),
            Method::Krr => {
                TrainedModel::KernelRidge(tune_kernel_ridge(train, &g.q_ls, &g.lambdas, opts.folds, opts.metric)?)
            }
        })
    }

    pub fn predict(&self, ds: &AlignedDataset) -> Vec<f64> {
        match self {
            TrainedModel::Respire(m) => m.predict_dataset(ds),
            TrainedModel::Ridge(m) => m.predict(ds),
            TrainedModel::KernelRidge(m) => m.predict(ds),
        }
    }
}

/// Scores of one (method, source, target, adapter) cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellScores {
    pub r2: f64,
    pub robust_r2_05: f64,
    pub n_test: usize,
    /// Target train-split R² of the raw predictions.
    pub train_r2_raw: f64,
    /// Target train-split R² after the adapter (equals the raw value when no
    /// adapter is used).
    pub train_r2_adapted: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioRow {
    pub method: Method,
    pub source: String,
    pub target: String,
    pub kind: Option<ScenarioKind>,
    pub adapter: bool,
    pub outcome: std::result::Result<CellScores, String>,
}

/// Scores `model` on the target test split, optionally through an adapter
/// fit on the target train split.
pub fn score_on_target(
    model: &TrainedModel,
    target_train: &AlignedDataset,
    target_test: &AlignedDataset,
    with_adapter: bool,
) -> Result<CellScores> {
    let train_pred = model.predict(target_train);
    let adapter = if with_adapter {
        Adapter::fit(&train_pred, &target_train.y)?
    } else {
        Adapter::IDENTITY
    };
    let test_pred = adapter.apply(&model.predict(target_test));
    Ok(CellScores {
        r2: r2(&target_test.y, &test_pred)?,
        robust_r2_05: robust_r2(&target_test.y, &test_pred, 0.05)?,
        n_test: target_test.len(),
        train_r2_raw: r2(&target_train.y, &train_pred)?,
        train_r2_adapted: r2(&target_train.y, &adapter.apply(&train_pred))?,
    })
}

/// Every ordered (source, target) pair of `ids`, for every method: train on
/// the source train split, evaluate on the target test split. Failures are
/// recorded per cell. Rows are ordered by method, source, target.
pub fn run_scenario_matrix(
    ids: &[String],
    datasets: &BTreeMap<String, AlignedDataset>,
    methods: &[Method],
    with_adapter: bool,
    opts: &TrainOptions,
) -> Result<Vec<ScenarioRow>> {
    if ids.is_empty() {
        return Err(invalid("scenario matrix needs at least one dataset"));
    }
    let splits: BTreeMap<&str, std::result::Result<(AlignedDataset, AlignedDataset), String>> = ids
        .iter()
        .map(|id| {
            let split = datasets
                .get(id)
                .ok_or_else(|| format!("dataset {id} is missing"))
                .and_then(|ds| temporal_split(ds, opts.train_frac).map_err(|e| e.to_string()));
            (id.as_str(), split)
        })
        .collect();

    let jobs: Vec<(Method, &String)> = methods.iter().flat_map(|&m| ids.iter().map(move |s| (m, s))).collect();
    let models: Vec<std::result::Result<TrainedModel, String>> = jobs
        .par_iter()
        .map(|&(m, src)| match &splits[src.as_str()] {
            Ok((train, _)) => TrainedModel::train(m, train, opts).map_err(|e| e.to_string()),
            Err(e) => Err(e.clone()),
        })
        .collect();

    let mut rows = Vec::new();
    for ((method, source), model) in jobs.iter().zip(&models) {
        for target in ids {
            let outcome = match (model, &splits[target.as_str()]) {
                (Err(e), _) => Err(format!("training on {source} failed: {e}")),
                (_, Err(e)) => Err(e.clone()),
                (Ok(m), Ok((tt, te))) => score_on_target(m, tt, te, with_adapter).map_err(|e| e.to_string()),
            };
            rows.push(ScenarioRow {
                method: *method,
                source: (*source).clone(),
                target: target.clone(),
                kind: ScenarioKind::from_ids(source, target).ok(),
                adapter: with_adapter,
                outcome,
            });
        }
    }
    Ok(rows)
}

pub const SCENARIO_HEADER: [&str; 8] = [
    "method",
    "source",
    "target",
    "kind",
    "adapter",
    "r2",
    "robust_r2_at_0.05",
    "n_test",
];

/// Writes scenario rows; failed cells keep their identifying columns and
/// leave the scores empty.
pub fn write_scenario_csv<W: Write>(rows: &[ScenarioRow], sink: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(sink);
    w.write_record(SCENARIO_HEADER)?;
    for row in rows {
        let kind = row.kind.map(|k| k.to_string()).unwrap_or_default();
        let (r2, rr2, n) = match &row.outcome {
            Ok(s) => (s.r2.to_string(), s.robust_r2_05.to_string(), s.n_test.to_string()),
            Err(_) => Default::default(),
        };
        w.write_record([
            row.method.as_str(),
            &row.source,
            &row.target,
            &kind,
            if row.adapter { "true" } else { "false" },
            &r2,
            &rr2,
            &n,
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// R² values of the five sensor-transfer scenarios.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SensorScenarios {
    /// Source test, no adapter.
    pub s1: f64,
    /// Source test, adapter fit on source train.
    pub s2: f64,
    /// Target test, raw target potentials.
    pub s3: f64,
    /// Target test, potentials mapped onto the source sensor.
    pub s4: f64,
    /// S4 plus an adapter fit on the target train split.
    pub s5: f64,
    pub map: SensorMap,
}

impl SensorScenarios {
    pub fn values(&self) -> [f64; 5] {
        [self.s1, self.s2, self.s3, self.s4, self.s5]
    }
}

/// Rows of `a` and `b` sharing a timestamp, as `(a_index, b_index)`.
fn overlap(a: &AlignedDataset, b: &AlignedDataset) -> Vec<(usize, usize)> {
    let (mut i, mut j, mut out) = (0, 0, Vec::new());
    while i < a.len() && j < b.len() {
        match a.t[i].cmp(&b.t[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                out.push((i, j));
                i += 1;
                j += 1;
            }
        }
    }
    out
}

/// Evaluates a model trained on the source sensor against a second,
/// co-located sensor. Both datasets are split with `train_frac`; the sensor
/// map and all adapters use train portions only.
pub fn run_sensor_scenarios(
    source: &AlignedDataset,
    target: &AlignedDataset,
    model: &TrainedModel,
    train_frac: f64,
) -> Result<SensorScenarios> {
    let (src_train, src_test) = temporal_split(source, train_frac)?;
    let (tgt_train, tgt_test) = temporal_split(target, train_frac)?;

    let pairs = overlap(&tgt_train, &src_train);
    if pairs.len() < 3 {
        return Err(Error::TooSmall(format!(
            "sensor map needs >= 3 overlapping train timestamps, found {}",
            pairs.len()
        )));
    }
    let t_ops = ops(&tgt_train);
    let s_ops = ops(&src_train);
    let map = SensorMap::fit(
        &pairs.iter().map(|&(i, _)| t_ops[i]).collect::<Vec<_>>(),
        &pairs.iter().map(|&(_, j)| s_ops[j]).collect::<Vec<_>>(),
    )?;

    let s1 = r2(&src_test.y, &model.predict(&src_test))?;
    let src_adapter = Adapter::fit(&model.predict(&src_train), &src_train.y)?;
    let s2 = r2(&src_test.y, &src_adapter.apply(&model.predict(&src_test)))?;
    let s3 = r2(&tgt_test.y, &model.predict(&tgt_test))?;
    let mapped_test = map.apply_dataset(&tgt_test);
    let mapped_pred = model.predict(&mapped_test);
    let s4 = r2(&tgt_test.y, &mapped_pred)?;
    let tgt_adapter = Adapter::fit(&model.predict(&map.apply_dataset(&tgt_train)), &tgt_train.y)?;
    let s5 = r2(&tgt_test.y, &tgt_adapter.apply(&mapped_pred))?;
    Ok(SensorScenarios { s1, s2, s3, s4, s5, map })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthlab::{field_dataset, FieldSpec};
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn adapter_examples() {
        let t = [1.0, 2.0, 4.0, 7.0];
        let ad = Adapter::fit(&t, &t).unwrap();
        assert_relative_eq!(ad.a, 1.0, epsilon = 1e-12);
        assert_relative_eq!(ad.b, 0.0, epsilon = 1e-12);
        let p: Vec<f64> = t.iter().map(|v| 2.0 * v + 3.0).collect();
        let ad = Adapter::fit(&p, &t).unwrap();
        assert_relative_eq!(ad.a, 0.5, epsilon = 1e-12);
        assert_relative_eq!(ad.b, -1.5, epsilon = 1e-12);
        for (x, y) in ad.apply(&p).iter().zip(&t) {
            assert_relative_eq!(x, y, epsilon = 1e-12);
        }
        assert_eq!(Adapter::fit(&[5.0; 4], &t).unwrap(), Adapter { a: 0.0, b: 3.5 });
        assert!(Adapter::fit(&[1.0], &[1.0]).is_err());
        assert_eq!(Adapter::IDENTITY.apply(&t), t.to_vec());
        assert_eq!(Adapter { a: 0.0, b: 2.0 }.apply(&t), vec![2.0; 4]);
    }

    fn ops_rows(n: usize) -> Vec<[f64; 2]> {
        (0..n)
            .map(|i| {
                let f = i as f64;
                [300.0 + 5.0 * (0.3 * f).sin() + f, 180.0 + 3.0 * (0.7 * f).cos()]
            })
            .collect()
    }

    #[test]
    fn sensor_map_examples() {
        let t = ops_rows(30);
        let id = SensorMap::fit(&t, &t).unwrap();
        for r in 0..2 {
            for c in 0..2 {
                assert_relative_eq!(id.a[r][c], if r == c { 1.0 } else { 0.0 }, epsilon = 1e-9);
            }
            assert_relative_eq!(id.d[r], 0.0, epsilon = 1e-6);
        }
        let swapped: Vec<[f64; 2]> = t.iter().map(|r| [r[1], r[0]]).collect();
        let perm = SensorMap::fit(&t, &swapped).unwrap();
        assert_relative_eq!(perm.a[0][1], 1.0, epsilon = 1e-9);
        assert_relative_eq!(perm.a[1][0], 1.0, epsilon = 1e-9);
        assert_relative_eq!(perm.a[0][0], 0.0, epsilon = 1e-9);
        for (m, s) in perm.apply(&t).iter().zip(&swapped) {
            assert_relative_eq!(m[0], s[0], epsilon = 1e-9);
            assert_relative_eq!(m[1], s[1], epsilon = 1e-9);
        }
        assert!(SensorMap::fit(&t[..2], &t[..2]).is_err());
        assert_eq!(SensorMap::IDENTITY.apply(&t), t);
        let zero = SensorMap { a: [[0.0; 2]; 2], d: [1.0, 2.0] };
        assert!(zero.apply(&t).iter().all(|r| *r == [1.0, 2.0]));
    }

    #[test]
    fn sensor_map_matches_normal_equations() {
        let t = ops_rows(40);
        let s: Vec<[f64; 2]> = t
            .iter()
            .enumerate()
            .map(|(i, r)| {
                let e = ((i * 37) % 13) as f64 * 0.01;
                [0.9 * r[0] + 0.1 * r[1] + 4.0 + e, -0.2 * r[0] + 1.1 * r[1] - 3.0 - e]
            })
            .collect();
        let map = SensorMap::fit(&t, &s).unwrap();
        let x = DMatrix::from_fn(40, 3, |i, j| if j < 2 { t[i][j] } else { 1.0 });
        let xtx = x.tr_mul(&x);
        for out in 0..2 {
            let y = DVector::from_iterator(40, s.iter().map(|r| r[out]));
            let coef = xtx.clone().lu().solve(&x.tr_mul(&y)).unwrap();
            let ours = [map.a[out][0], map.a[out][1], map.d[out]];
            let res_oracle = (&y - &x * &coef).norm();
            let res_ours = (&y - &x * DVector::from_row_slice(&ours)).norm();
            assert!((res_oracle - res_ours).abs() <= 1e-8 * (1.0 + res_oracle));
        }
    }

    #[test]
    fn rank_deficient_map_is_minimum_norm() {
        // constant second potential: the design has rank 2
        let t: Vec<[f64; 2]> = (0..10).map(|i| [i as f64, 5.0]).collect();
        let s: Vec<[f64; 2]> = t.iter().map(|r| [2.0 * r[0] + 1.0, 3.0]).collect();
        let map = SensorMap::fit(&t, &s).unwrap();
        for (m, e) in map.apply(&t).iter().zip(&s) {
            assert_relative_eq!(m[0], e[0], epsilon = 1e-9);
            assert_relative_eq!(m[1], e[1], epsilon = 1e-9);
        }
        // min-norm splits the constant between the column of 5s and d
        assert_relative_eq!(map.a[1][1] * 5.0 + map.d[1], 3.0, epsilon = 1e-9);
        assert_relative_eq!(map.a[1][1], 5.0 * map.d[1], epsilon = 1e-9);
    }

    #[test]
    fn scenario_kinds() {
        assert_eq!(ScenarioKind::from_ids("T-W", "T-W").unwrap(), ScenarioKind::SS);
        assert_eq!(ScenarioKind::from_ids("T-W", "T-S").unwrap(), ScenarioKind::SX);
        assert_eq!(ScenarioKind::from_ids("T-W", "M-W").unwrap(), ScenarioKind::XS);
        assert_eq!(ScenarioKind::from_ids("T-W", "M-S").unwrap(), ScenarioKind::XX);
        assert!(ScenarioKind::from_ids("TW", "T-W").is_err());
        assert!(ScenarioKind::from_ids("T-W-X", "T-W").is_err());
        assert_eq!("krr".parse::<Method>().unwrap(), Method::Krr);
        assert!("svm".parse::<Method>().is_err());
    }

    fn quick_opts() -> TrainOptions {
        TrainOptions {
            grid: HyperGrid {
                alphas: vec![0.0, 0.05],
                q_ls: vec![0.5],
                etas: vec![1.0],
                lambdas: vec![1.0],
                ..Default::default()
            },
            ..Default::default()
        }
    }

    fn field(seed: u64, n: usize) -> AlignedDataset {
        field_dataset(&FieldSpec {
            n_points: n,
            seed,
            ..Default::default()
        })
        .unwrap()
    }

    #[test]
    fn single_dataset_gives_only_ss_cells() {
        let mut map = BTreeMap::new();
        map.insert("T-W".to_string(), field(1, 150));
        let ids = vec!["T-W".to_string()];
        let rows = run_scenario_matrix(&ids, &map, &Method::ALL, false, &quick_opts()).unwrap();
        assert_eq!(rows.len(), 3);
        assert!(rows.iter().all(|r| r.kind == Some(ScenarioKind::SS) && r.outcome.is_ok()));
    }

    #[test]
    fn matrix_records_missing_dataset_and_continues() {
        let mut map = BTreeMap::new();
        map.insert("T-W".to_string(), field(1, 150));
        map.insert("M-S".to_string(), field(2, 150));
        let ids: Vec<String> = ["T-W", "M-S", "X-S"].iter().map(|s| s.to_string()).collect();
        let rows = run_scenario_matrix(&ids, &map, &[Method::Rr], true, &quick_opts()).unwrap();
        assert_eq!(rows.len(), 9);
        let failed = rows.iter().filter(|r| r.outcome.is_err()).count();
        assert_eq!(failed, 5); // X-S as source (3) and as target of the others (2)
        for r in rows.iter().filter_map(|r| r.outcome.as_ref().ok()) {
            assert!(r.train_r2_adapted >= r.train_r2_raw - 1e-12);
        }
        let mut buf = Vec::new();
        write_scenario_csv(&rows, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().next().unwrap(), "method,source,target,kind,adapter,r2,robust_r2_at_0.05,n_test");
        assert!(text.contains("RR,X-S,T-W,XX,true,,,"));
    }

    #[test]
    fn sensor_scenarios_identity_and_swap() {
        let ds = field(3, 200);
        let (train, _) = temporal_split(&ds, 0.8).unwrap();
        let model = TrainedModel::train(Method::Respire, &train, &quick_opts()).unwrap();
        let same = run_sensor_scenarios(&ds, &ds, &model, 0.8).unwrap();
        assert_eq!(same.s3, same.s1);
        assert_relative_eq!(same.s4, same.s1, epsilon = 1e-6);

        let swapped = ds.with_ops(ds.x2.clone(), ds.x1.clone());
        let sw = run_sensor_scenarios(&ds, &swapped, &model, 0.8).unwrap();
        assert!(sw.s3 < sw.s1);
        assert_relative_eq!(sw.s4, sw.s1, epsilon = 1e-6);
    }

    #[test]
    fn sensor_scenarios_need_overlap() {
        let a = field(4, 60);
        let shifted = {
            let t = a.t.iter().map(|t| *t + chrono::Duration::days(365)).collect();
            AlignedDataset::new(t, a.x1.clone(), a.x2.clone(), a.z_raw.clone(), a.y.clone()).unwrap()
        };
        let model = TrainedModel::train(Method::Rr, &a, &quick_opts()).unwrap();
        assert!(run_sensor_scenarios(&a, &shifted, &model, 0.8).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn adapter_is_a_least_squares_minimum(
            p in proptest::collection::vec(-50.0f64..50.0, 3..30),
            a in -3.0f64..3.0,
            b in -5.0f64..5.0,
            seed in 0u64..1000,
        ) {
            let truth: Vec<f64> = p.iter().enumerate()
                .map(|(i, v)| a * v + b + ((i as u64 * 31 + seed) % 17) as f64 * 0.1)
                .collect();
            let ad = Adapter::fit(&p, &truth).unwrap();
            let sse = |aa: f64, bb: f64| p.iter().zip(&truth).map(|(x, y)| (y - aa * x - bb).powi(2)).sum::<f64>();
            let base = sse(ad.a, ad.b);
            for (da, db) in [(1e-3, 0.0), (-1e-3, 0.0), (0.0, 1e-3), (0.0, -1e-3)] {
                prop_assert!(sse(ad.a + da, ad.b + db) >= base - 1e-9 * (1.0 + base));
            }
        }

        #[test]
        fn sensor_map_ignores_row_order(seed in 0u64..500) {
            let t = ops_rows(12);
            let s: Vec<[f64; 2]> = t.iter().enumerate()
                .map(|(i, r)| [r[0] * 0.8 + ((i as u64 + seed) % 5) as f64, r[1] + 2.0])
                .collect();
            let mut order: Vec<usize> = (0..12).collect();
            order.rotate_left((seed % 12) as usize);
            order.reverse();
            let tp: Vec<_> = order.iter().map(|&i| t[i]).collect();
            let sp: Vec<_> = order.iter().map(|&i| s[i]).collect();
            let m1 = SensorMap::fit(&t, &s).unwrap();
            let m2 = SensorMap::fit(&tp, &sp).unwrap();
            for r in 0..2 {
                for c in 0..2 {
                    prop_assert!((m1.a[r][c] - m2.a[r][c]).abs() <= 1e-9);
                }
                prop_assert!((m1.d[r] - m2.d[r]).abs() <= 1e-7);
            }
        }
    }
}
