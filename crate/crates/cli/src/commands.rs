use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};

use respire::dataio::{
    align, read_aligned_csv, read_reference_csv, read_sensor_csv, resample_average, resample_reference,
    temporal_split, write_aligned_csv, ResampleOptions,
};
use respire::evaluation::{overfit_flag, r2, training_range_grid, win_counts, EvalReport, DEFAULT_DELTAS};
use respire::model_io::{read_model, write_model, ModelFile};
use respire::synthlab::{
    check_eigen_bounds, check_psd_closure, field_dataset, generate, plant_outliers, recovery_on_instance,
    FieldSpec, InnerFit, RecoveryReport, SynthSpec, NOISE_CONSTANT, RECOVERY_EPSILON,
};
use respire::transfer::{run_scenario_matrix, run_sensor_scenarios, write_scenario_csv, Method, TrainedModel};
use respire::tuning::grid_search_with;
use respire::{compress, AlignedDataset, FitProblem, SemiParamModel};

use crate::config::RunConfig;

/// How a command ended when it did not hit a usage or I/O error.
#[derive(Debug, PartialEq, Eq)]
pub enum Outcome {
    Success,
    /// A checked property did not hold.
    Failed(String),
}

pub fn load_config(path: Option<&Path>) -> Result<RunConfig> {
    match path {
        Some(p) => RunConfig::load(p),
        None => Ok(RunConfig::default()),
    }
}

fn open(path: &Path) -> Result<File> {
    File::open(path).with_context(|| format!("cannot open {}", path.display()))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    }
    Ok(BufWriter::new(
        File::create(path).with_context(|| format!("cannot create {}", path.display()))?,
    ))
}

pub fn out_path(explicit: Option<PathBuf>, cfg: &RunConfig, default_name: &str) -> PathBuf {
    explicit.unwrap_or_else(|| cfg.output_dir.join(default_name))
}

pub fn read_dataset(path: &Path) -> Result<AlignedDataset> {
    read_aligned_csv(open(path)?).with_context(|| format!("reading {}", path.display()))
}

fn read_model_file(path: &Path) -> Result<ModelFile> {
    read_model(open(path)?).with_context(|| format!("reading model {}", path.display()))
}

fn stem(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

pub fn ingest(sensor: &Path, reference: &Path, sensor_id: Option<&str>, out: &Path) -> Result<Outcome> {
    let id = sensor_id.map(str::to_string).unwrap_or_else(|| stem(sensor));
    let raw = read_sensor_csv(open(sensor)?, &id).with_context(|| format!("reading {}", sensor.display()))?;
    let refs = read_reference_csv(open(reference)?).with_context(|| format!("reading {}", reference.display()))?;
    let opts = ResampleOptions::default();
    let lcaq = resample_average(&raw, opts)?;
    let ref_avg = resample_reference(&refs, opts)?;
    let ds = align(&lcaq, &ref_avg)?;
    write_aligned_csv(&ds, create(out)?)?;
    println!("sensor {id}");
    println!("  sensor records        {}", raw.records.len());
    println!("  sensor windows        {}", lcaq.records.len());
    println!("  reference records     {}", refs.records.len());
    println!("  reference windows     {}", ref_avg.records.len());
    println!("  aligned records       {}", ds.len());
    println!("wrote {}", out.display());
    Ok(Outcome::Success)
}

/// Loads a dataset, enforces the minimum size and splits it chronologically.
fn split(cfg: &RunConfig, path: &Path) -> Result<(AlignedDataset, AlignedDataset)> {
    let ds = read_dataset(path)?;
    ensure!(
        ds.len() >= cfg.min_points,
        "dataset too small: {} has {} aligned points, at least {} required",
        path.display(),
        ds.len(),
        cfg.min_points
    );
    Ok(temporal_split(&ds, cfg.train_frac)?)
}

pub fn fit(cfg: &RunConfig, data: &Path, model_out: &Path, cv_table: Option<&Path>) -> Result<Outcome> {
    let (train, test) = split(cfg, data)?;
    let tuned = grid_search_with(&train, &cfg.hyper_grid()?, cfg.folds, &cfg.base_config(), cfg.metric()?)?;
    let fit = tuned.fit(&train)?;
    let file = ModelFile {
        model: fit.model,
        corruption: Some(fit.corruption),
    };
    write_model(&file, create(model_out)?)?;
    if let Some(p) = cv_table {
        tuned.write_cv_csv(create(p)?)?;
    }
    let m = &file.model;
    let b = tuned.best;
    println!("train {} / test {} records", train.len(), test.len());
    println!("chosen hyperparameters (mean CV score {:.4}):", tuned.best_r2);
    println!("  family        {}", b.family);
    println!("  alpha         {}", b.alpha);
    println!("  q_ls          {}  (length scale {:.6})", b.q_ls, m.spec.length_scale());
    println!("  eta           {}", b.eta);
    println!("  lambda        {}", b.lambda);
    println!(
        "robust loop: {} iteration(s), {}",
        fit.iterations,
        if fit.converged { "converged" } else { "not converged" }
    );
    println!("train R² {:.4}", r2(&train.y, &m.predict_dataset(&train))?);
    println!("test R²  {:.4}", r2(&test.y, &m.predict_dataset(&test))?);
    println!("wrote {}", model_out.display());
    Ok(Outcome::Success)
}

pub fn tune(cfg: &RunConfig, data: &Path, out: &Path) -> Result<Outcome> {
    let (train, _) = split(cfg, data)?;
    let grid = cfg.hyper_grid()?;
    let tuned = grid_search_with(&train, &grid, cfg.folds, &cfg.base_config(), cfg.metric()?)?;
    tuned.write_cv_csv(create(out)?)?;
    let b = tuned.best;
    println!("{} cells, {} folds, {} training records", grid.len(), cfg.folds, train.len());
    println!(
        "best: family={} alpha={} q_ls={} eta={} lambda={} (mean CV score {:.4})",
        b.family, b.alpha, b.q_ls, b.eta, b.lambda, tuned.best_r2
    );
    println!("wrote {}", out.display());
    Ok(Outcome::Success)
}

pub fn evaluate(cfg: &RunConfig, model: &Path, data: &Path, out: &Path) -> Result<Outcome> {
    let file = read_model_file(model)?;
    let (_, test) = split(cfg, data)?;
    let yhat = file.model.predict_dataset(&test);
    let report = EvalReport::new("RESPIRE", &stem(data), &test.y, &yhat, &DEFAULT_DELTAS)?;
    report.write_curve_csv(create(out)?)?;
    print!("{}", report.summary());
    println!("wrote {}", out.display());
    Ok(Outcome::Success)
}

pub fn transfer_matrix(cfg: &RunConfig, out: &Path) -> Result<Outcome> {
    ensure!(
        cfg.datasets.len() >= 2,
        "transfer-matrix needs at least 2 datasets in the config, found {}",
        cfg.datasets.len()
    );
    let ids: Vec<String> = cfg.datasets.iter().map(|d| d.id.clone()).collect();
    let mut data = BTreeMap::new();
    for d in &cfg.datasets {
        data.insert(d.id.clone(), read_dataset(&d.path)?);
    }
    let methods = cfg.methods()?;
    let opts = cfg.train_options()?;
    let mut rows = Vec::new();
    for &adapter in cfg.adapter.settings() {
        rows.extend(run_scenario_matrix(&ids, &data, &methods, adapter, &opts)?);
    }
    write_scenario_csv(&rows, create(out)?)?;

    let failed = rows.iter().filter(|r| r.outcome.is_err()).count();
    for &adapter in cfg.adapter.settings() {
        let mut scores: BTreeMap<String, BTreeMap<String, f64>> = BTreeMap::new();
        for r in rows.iter().filter(|r| r.adapter == adapter) {
            let row = scores.entry(format!("{} -> {}", r.source, r.target)).or_default();
            row.insert(r.method.to_string(), r.outcome.as_ref().map_or(f64::NAN, |s| s.r2));
        }
        let wins = win_counts(&scores, 1e-3);
        let label = if adapter { "with adapter" } else { "without adapter" };
        println!("win counts {label} ({} experiments):", scores.len());
        for m in &methods {
            println!("  {:<8} {}", m.as_str(), wins.get(m.as_str()).copied().unwrap_or(0));
        }
    }
    for r in &rows {
        if let Err(e) = &r.outcome {
            println!(
                "failed: {} {} -> {} (adapter {}): {e}",
                r.method, r.source, r.target, r.adapter
            );
        }
    }
    println!("{} rows, {failed} failed", rows.len());
    println!("wrote {}", out.display());
    if failed == rows.len() {
        return Ok(Outcome::Failed("every transfer cell failed".into()));
    }
    Ok(Outcome::Success)
}

pub fn sensor_transfer(
    cfg: &RunConfig,
    source: &Path,
    target: &Path,
    method: Method,
    out: &Path,
) -> Result<Outcome> {
    let a = read_dataset(source)?;
    let b = read_dataset(target)?;
    let opts = cfg.train_options()?;
    let (na, nb) = (stem(source), stem(target));
    let mut w = csv::Writer::from_writer(create(out)?);
    w.write_record(["direction", "S1", "S2", "S3", "S4", "S5"])?;
    println!("method {method}");
    for (src, tgt, label) in [(&a, &b, format!("{na}->{nb}")), (&b, &a, format!("{nb}->{na}"))] {
        ensure!(
            src.len() >= cfg.min_points,
            "dataset too small: {} aligned points, at least {} required",
            src.len(),
            cfg.min_points
        );
        let (train, _) = temporal_split(src, cfg.train_frac)?;
        let model = TrainedModel::train(method, &train, &opts)?;
        let s = run_sensor_scenarios(src, tgt, &model, cfg.train_frac).with_context(|| label.clone())?;
        let v = s.values();
        let mut rec = vec![label.clone()];
        rec.extend(v.iter().map(|x| x.to_string()));
        w.write_record(&rec)?;
        println!(
            "  {label:<24} S1 {:.4}  S2 {:.4}  S3 {:.4}  S4 {:.4}  S5 {:.4}",
            v[0], v[1], v[2], v[3], v[4]
        );
    }
    w.flush()?;
    println!("wrote {}", out.display());
    Ok(Outcome::Success)
}

/// Number of retained coordinates for a retention level.
pub fn keep_count(level: f64, n: usize) -> usize {
    ((level * n as f64 - 1e-9).ceil() as usize).clamp(1, n)
}

pub fn compress_sweep(cfg: &RunConfig, model: &Path, data: &Path, levels: &[f64], out: &Path) -> Result<Outcome> {
    let file = read_model_file(model)?;
    let (train, test) = split(cfg, data)?;
    let p = FitProblem::from_dataset(&train);
    ensure!(
        p.z == file.model.z_train,
        "{} does not reproduce the model's training split (check train_frac)",
        data.display()
    );
    let n = file.model.len();
    let full_r2 = r2(&test.y, &file.model.predict_dataset(&test))?;
    let mut w = csv::Writer::from_writer(create(out)?);
    w.write_record(["level", "n_keep", "r2"])?;
    println!("uncompressed: N = {n}, test R² {full_r2:.4}");
    for &level in levels {
        ensure!(level > 0.0 && level <= 1.0, "retention level {level} outside (0, 1]");
        let k = keep_count(level, n);
        let small: SemiParamModel = compress(&file.model, &p, k)?;
        let score = r2(&test.y, &small.predict_dataset(&test))?;
        w.write_record([level.to_string(), k.to_string(), score.to_string()])?;
        println!("  level {level:<6} n_keep {k:<6} test R² {score:.4}");
    }
    w.flush()?;
    println!("wrote {}", out.display());
    Ok(Outcome::Success)
}

pub fn diagnose(model: &Path, tau: f64, out: &Path) -> Result<Outcome> {
    let file = read_model_file(model)?;
    let m = &file.model;
    let grid = training_range_grid(m, respire::evaluation::DIAGNOSTIC_GRID);
    let curves = m.weight_curves(&grid);
    let mut w = csv::Writer::from_writer(create(out)?);
    w.write_record(["z", "w1", "w2", "b"])?;
    for i in 0..grid.len() {
        w.write_record([
            curves.z[i].to_string(),
            curves.w1[i].to_string(),
            curves.w2[i].to_string(),
            curves.b[i].to_string(),
        ])?;
    }
    w.flush()?;
    let rep = overfit_flag(m, tau)?;
    println!("smoothness index w1 {:.4}", rep.indices[0]);
    println!("smoothness index w2 {:.4}", rep.indices[1]);
    println!("smoothness index b  {:.4}", rep.indices[2]);
    println!(
        "overfit flag (tau = {}): {}",
        rep.tau,
        if rep.flagged { "FLAGGED" } else { "ok" }
    );
    println!("wrote {}", out.display());
    Ok(Outcome::Success)
}

pub struct SynthDataArgs {
    pub n_points: usize,
    pub seed: u64,
    pub start_unix: Option<i64>,
    pub outlier_frac: f64,
    /// Outlier size as a multiple of `max |y|`.
    pub outlier_scale: f64,
    pub swap_ops: bool,
}

pub fn synth_data(args: &SynthDataArgs, out: &Path) -> Result<Outcome> {
    let mut spec = FieldSpec {
        n_points: args.n_points,
        seed: args.seed,
        ..FieldSpec::default()
    };
    if let Some(t) = args.start_unix {
        spec.start_unix = t;
    }
    let mut ds = field_dataset(&spec)?;
    let mut planted = 0;
    if args.outlier_frac > 0.0 {
        let ymax = ds.y.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        let (d, idx) = plant_outliers(&ds, 0..ds.len(), args.outlier_frac, args.outlier_scale * ymax, args.seed);
        ds = d;
        planted = idx.len();
    }
    if args.swap_ops {
        ds = ds.with_ops(ds.x2.clone(), ds.x1.clone());
    }
    write_aligned_csv(&ds, create(out)?)?;
    println!("{} records, {planted} outliers planted", ds.len());
    println!("wrote {}", out.display());
    Ok(Outcome::Success)
}

pub struct SynthVerifyArgs {
    pub spec: SynthSpec,
    pub seeds: u64,
    pub noise_sigma: f64,
    pub inner: InnerFit,
    pub max_iters: usize,
    pub psd_trials: usize,
    pub eigen_trials: usize,
    pub lemma_dim: usize,
    pub breakdown: bool,
}

struct Check {
    name: String,
    passed: bool,
    detail: String,
    asserted: bool,
}

fn recovery_suite(args: &SynthVerifyArgs, sigma: f64) -> Result<Vec<RecoveryReport>> {
    (0..args.seeds)
        .map(|i| {
            let spec = SynthSpec {
                noise_sigma: sigma,
                seed: args.spec.seed + i,
                ..args.spec
            };
            let inst = generate(&spec)?;
            Ok(recovery_on_instance(&spec, &inst, args.inner, 1.0, args.max_iters)?)
        })
        .collect()
}

fn write_traces(path: &Path, suites: &[(&str, &[RecoveryReport])]) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    w.write_record(["suite", "seed", "iteration", "error"])?;
    for (name, reps) in suites {
        for r in *reps {
            for (t, e) in r.errors.iter().enumerate() {
                w.write_record([name.to_string(), r.seed.to_string(), (t + 1).to_string(), e.to_string()])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

pub fn synth_verify(args: &SynthVerifyArgs, out_dir: Option<&Path>) -> Result<Outcome> {
    args.spec.validate()?;
    ensure!(args.seeds > 0, "need at least one seed");
    let seed = args.spec.seed;
    let mut checks = Vec::new();

    let psd = check_psd_closure(args.psd_trials, args.lemma_dim, seed);
    let eig = check_eigen_bounds(args.eigen_trials, args.lemma_dim.min(8), 3.min(args.lemma_dim), 3.min(args.lemma_dim), seed)?;
    for rep in [&psd, &eig] {
        checks.push(Check {
            name: rep.name.to_string(),
            passed: rep.passed(),
            detail: match rep.violations.first() {
                None => format!("{} trials, {} checks, 0 violations", rep.trials, rep.checks),
                Some((t, msg)) => format!("{} violations; first at trial {t} (seed {seed}): {msg}", rep.violations.len()),
            },
            asserted: true,
        });
    }

    let clean = recovery_suite(args, 0.0)?;
    let needed = (args.seeds * 19).div_ceil(20);
    let good: Vec<bool> = clean
        .iter()
        .map(|r| r.recovered && r.decays_geometrically(0.9, 2, RECOVERY_EPSILON))
        .collect();
    let n_good = good.iter().filter(|&&g| g).count() as u64;
    let worst = clean.iter().map(|r| r.final_error).fold(0.0, f64::max);
    let first_bad = clean.iter().zip(&good).find(|(_, g)| !**g).map(|(r, _)| r.seed);
    checks.push(Check {
        name: "noiseless recovery".into(),
        passed: n_good >= needed,
        detail: format!(
            "{n_good}/{} seeds within {RECOVERY_EPSILON:e} with decay ratio <= 0.9 (need {needed}); worst final error {worst:.3e}{}",
            args.seeds,
            first_bad.map_or(String::new(), |s| format!("; first failing seed {s}"))
        ),
        asserted: true,
    });

    let noisy = recovery_suite(args, args.noise_sigma)?;
    let bad: Vec<&RecoveryReport> = noisy
        .iter()
        .filter(|r| r.final_error > NOISE_CONSTANT * r.noise_norm + RECOVERY_EPSILON)
        .collect();
    let worst_ratio = noisy
        .iter()
        .map(|r| r.final_error / (NOISE_CONSTANT * r.noise_norm + RECOVERY_EPSILON))
        .fold(0.0, f64::max);
    checks.push(Check {
        name: format!("noise floor (sigma {})", args.noise_sigma),
        passed: bad.is_empty(),
        detail: format!(
            "{}/{} seeds within 7·‖e*‖ + {RECOVERY_EPSILON:e}; worst error/bound {worst_ratio:.3e}{}",
            noisy.len() - bad.len(),
            noisy.len(),
            bad.first().map_or(String::new(), |r| format!("; first failing seed {}", r.seed))
        ),
        asserted: true,
    });

    let mut breakdown = Vec::new();
    if args.breakdown {
        let spec = SynthSpec {
            k: args.spec.n_points / 2,
            ..args.spec
        };
        let inst = generate(&spec)?;
        let rep = recovery_on_instance(&spec, &inst, args.inner, 1.0, args.max_iters)?;
        checks.push(Check {
            name: format!("breakdown demo (k = {})", spec.k),
            passed: rep.recovered,
            detail: format!("final error {:.3e}, recovered = {}", rep.final_error, rep.recovered),
            asserted: false,
        });
        breakdown.push(rep);
    }

    println!(
        "synthetic verification: N={} s={} k={} h={} seeds {}..{} inner={:?}",
        args.spec.n_points,
        args.spec.s,
        args.spec.k,
        args.spec.h,
        seed,
        seed + args.seeds - 1,
        args.inner
    );
    for c in &checks {
        let verdict = match (c.asserted, c.passed) {
            (true, true) => "PASS",
            (true, false) => "FAIL",
            (false, _) => "INFO",
        };
        println!("{verdict:<5} {:<28} {}", c.name, c.detail);
    }

    if let Some(dir) = out_dir {
        let mut w = csv::Writer::from_writer(create(&dir.join("synth_report.csv"))?);
        w.write_record(["check", "asserted", "passed", "detail"])?;
        for c in &checks {
            w.write_record([c.name.clone(), c.asserted.to_string(), c.passed.to_string(), c.detail.clone()])?;
        }
        w.flush()?;
        write_traces(
            &dir.join("synth_traces.csv"),
            &[("noiseless", &clean), ("noisy", &noisy), ("breakdown", &breakdown)],
        )?;
        println!("wrote {}", dir.display());
    }

    let failed: Vec<&str> = checks
        .iter()
        .filter(|c| c.asserted && !c.passed)
        .map(|c| c.name.as_str())
        .collect();
    if failed.is_empty() {
        Ok(Outcome::Success)
    } else {
        Ok(Outcome::Failed(format!("failed checks: {}", failed.join(", "))))
    }
}

pub fn write_default_config(out: &Path) -> Result<Outcome> {
    if out.exists() {
        bail!("{} already exists", out.display());
    }
    let mut w = create(out)?;
    w.write_all(RunConfig::default().to_toml()?.as_bytes())?;
    w.flush()?;
    println!("wrote {}", out.display());
    Ok(Outcome::Success)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn keep_count_rounds_up_and_clamps() {
        assert_eq!(keep_count(1.0, 400), 400);
        assert_eq!(keep_count(0.1, 400), 40);
        assert_eq!(keep_count(0.05, 10), 1);
        assert_eq!(keep_count(0.001, 10), 1);
        assert_eq!(keep_count(0.25, 10), 3);
    }
}
