//! Run configuration, stored as TOML.
//!
//! ```toml
//! version = 1
//! seed = 0
//! train_frac = 0.8
//! folds = 3
//! min_points = 30
//! cv_metric = "r2"            # or "robust-r2:0.05"
//! methods = ["RESPIRE", "RR", "KRR"]
//! adapter = "both"            # "off", "on" or "both"
//! compression_levels = [1.0, 0.5, 0.25, 0.1, 0.05]
//! output_dir = "out"
//!
//! [grid]
//! alphas = [0.0, 0.05, 0.1, 0.15, 0.2]
//! q_ls = [0.1, 0.3, 0.5, 0.7, 0.9]
//! etas = [0.1, 0.4, 0.7, 1.0]
//! lambdas = [0.1, 0.5, 1.0, 5.0, 10.0]
//! families = ["gaussian"]
//!
//! [robust]
//! max_iters = 50
//! tol = 1e-6
//!
//! [[datasets]]
//! id = "LKO-winter"
//! path = "lko_winter.csv"
//! ```
//!
//! Every key is optional. Relative dataset paths and `output_dir` are
//! resolved against the directory holding the config file.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use serde::{Deserialize, Serialize};

use respire::robust::RobustConfig;
use respire::transfer::{Method, TrainOptions};
use respire::tuning::{CvMetric, HyperGrid, DEFAULT_FOLDS};
use respire::KernelFamily;

pub const CONFIG_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AdapterMode {
    Off,
    On,
    Both,
}

impl AdapterMode {
    pub fn settings(self) -> &'static [bool] {
        match self {
            AdapterMode::Off => &[false],
            AdapterMode::On => &[true],
            AdapterMode::Both => &[false, true],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    pub alphas: Vec<f64>,
    pub q_ls: Vec<f64>,
    pub etas: Vec<f64>,
    pub lambdas: Vec<f64>,
    pub families: Vec<String>,
}

impl Default for GridConfig {
    fn default() -> Self {
        let g = HyperGrid::default();
        Self {
            alphas: g.alphas,
            q_ls: g.q_ls,
            etas: g.etas,
            lambdas: g.lambdas,
            families: g.families.iter().map(|f| f.to_string()).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LoopConfig {
    pub max_iters: usize,
    pub tol: f64,
}

impl Default for LoopConfig {
    fn default() -> Self {
        let r = RobustConfig::default();
        Self {
            max_iters: r.max_iters,
            tol: r.tol,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetEntry {
    pub id: String,
    pub path: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub version: u32,
    pub seed: u64,
    pub train_frac: f64,
    pub folds: usize,
    pub min_points: usize,
    pub cv_metric: String,
    pub methods: Vec<String>,
    pub adapter: AdapterMode,
    pub compression_levels: Vec<f64>,
    pub output_dir: PathBuf,
    pub grid: GridConfig,
    pub robust: LoopConfig,
    pub datasets: Vec<DatasetEntry>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            version: CONFIG_VERSION,
            seed: 0,
            train_frac: 0.8,
            folds: DEFAULT_FOLDS,
            min_points: 30,
            cv_metric: "r2".into(),
            methods: Method::ALL.iter().map(|m| m.as_str().to_string()).collect(),
            adapter: AdapterMode::Both,
            compression_levels: vec![1.0, 0.5, 0.25, 0.1, 0.05],
            output_dir: PathBuf::from("."),
            grid: GridConfig::default(),
            robust: LoopConfig::default(),
            datasets: Vec::new(),
        }
    }
}

pub fn parse_metric(s: &str) -> Result<CvMetric> {
    let s = s.trim();
    if s.eq_ignore_ascii_case("r2") {
        return Ok(CvMetric::R2);
    }
    if let Some(d) = s.strip_prefix("robust-r2:") {
        let d: f64 = d.parse().with_context(|| format!("bad robust-r2 fraction in {s:?}"))?;
        ensure!((0.0..1.0).contains(&d), "robust-r2 fraction {d} outside [0, 1)");
        return Ok(CvMetric::RobustR2(d));
    }
    bail!("unknown cv_metric {s:?} (expected \"r2\" or \"robust-r2:<fraction>\")")
}

impl RunConfig {
    /// Parses a config without touching the filesystem.
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).context("invalid config")?;
        ensure!(
            cfg.version == CONFIG_VERSION,
            "unsupported config version {} (this build reads version {CONFIG_VERSION})",
            cfg.version
        );
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    /// Reads a config file, resolves relative paths against its directory and
    /// checks that every dataset exists.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("cannot read config {}", path.display()))?;
        let mut cfg = Self::from_toml(&text).with_context(|| format!("in {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new(""));
        cfg.output_dir = base.join(&cfg.output_dir);
        for d in &mut cfg.datasets {
            d.path = base.join(&d.path);
            ensure!(d.path.is_file(), "dataset {:?}: {} does not exist", d.id, d.path.display());
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        ensure!(
            self.train_frac > 0.0 && self.train_frac < 1.0,
            "train_frac must lie in (0, 1), got {}",
            self.train_frac
        );
        ensure!(self.folds >= 2, "folds must be at least 2");
        ensure!(self.min_points >= 2, "min_points must be at least 2");
        parse_metric(&self.cv_metric)?;
        self.methods()?;
        self.hyper_grid()?.validate()?;
        self.base_config().validate()?;
        for &l in &self.compression_levels {
            ensure!(l > 0.0 && l <= 1.0, "compression level {l} outside (0, 1]");
        }
        let mut ids = BTreeSet::new();
        for d in &self.datasets {
            ensure!(!d.id.is_empty(), "dataset ids must be non-empty");
            ensure!(ids.insert(d.id.as_str()), "duplicate dataset id {:?}", d.id);
        }
        Ok(())
    }

    pub fn methods(&self) -> Result<Vec<Method>> {
        ensure!(!self.methods.is_empty(), "methods must not be empty");
        Ok(self.methods.iter().map(|m| m.parse()).collect::<Result<Vec<Method>, _>>()?)
    }

    pub fn metric(&self) -> Result<CvMetric> {
        parse_metric(&self.cv_metric)
    }

    pub fn hyper_grid(&self) -> Result<HyperGrid> {
        let families = self
            .grid
            .families
            .iter()
            .map(|f| f.parse())
            .collect::<Result<Vec<KernelFamily>, _>>()?;
        Ok(HyperGrid {
            alphas: self.grid.alphas.clone(),
            q_ls: self.grid.q_ls.clone(),
            etas: self.grid.etas.clone(),
            lambdas: self.grid.lambdas.clone(),
            families,
        })
    }

    /// Loop settings the grid search does not tune.
    pub fn base_config(&self) -> RobustConfig {
        RobustConfig {
            max_iters: self.robust.max_iters,
            tol: self.robust.tol,
            ..RobustConfig::default()
        }
    }

    pub fn train_options(&self) -> Result<TrainOptions> {
        Ok(TrainOptions {
            grid: self.hyper_grid()?,
            folds: self.folds,
            base: self.base_config(),
            metric: self.metric()?,
            train_frac: self.train_frac,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_roundtrips() {
        let cfg = RunConfig::default();
        let text = cfg.to_toml().unwrap();
        assert_eq!(RunConfig::from_toml(&text).unwrap(), cfg);
    }

    #[test]
    fn edited_config_roundtrips() {
        let cfg = RunConfig {
            seed: 17,
            cv_metric: "robust-r2:0.05".into(),
            methods: vec!["RESPIRE".into()],
            adapter: AdapterMode::On,
            compression_levels: vec![0.3],
            grid: GridConfig {
                alphas: vec![0.0, 0.1],
                q_ls: vec![0.5],
                etas: vec![1.0],
                lambdas: vec![1.0 / 3.0],
                families: vec!["matern-5/2".into()],
            },
            datasets: vec![DatasetEntry {
                id: "A-S1".into(),
                path: "a.csv".into(),
            }],
            ..RunConfig::default()
        };
        let back = RunConfig::from_toml(&cfg.to_toml().unwrap()).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.metric().unwrap(), CvMetric::RobustR2(0.05));
    }

    #[test]
    fn empty_file_means_defaults() {
        assert_eq!(RunConfig::from_toml("").unwrap(), RunConfig::default());
    }

    #[test]
    fn rejects_bad_configs() {
        for text in [
            "version = 2",
            "unknown_key = 1",
            "train_frac = 1.0",
            "cv_metric = \"mse\"",
            "methods = [\"SVR\"]",
            "[grid]\nalphas = [0.7]",
            "[grid]\nfamilies = [\"cubic\"]",
            "compression_levels = [0.0]",
            "[[datasets]]\nid = \"a\"\npath = \"x\"\n[[datasets]]\nid = \"a\"\npath = \"y\"",
        ] {
            assert!(RunConfig::from_toml(text).is_err(), "accepted {text:?}");
        }
    }

    #[test]
    fn load_checks_dataset_paths() {
        let dir = tempfile::tempdir().unwrap();
        let cfg_path = dir.path().join("run.toml");
        std::fs::write(&cfg_path, "[[datasets]]\nid = \"a\"\npath = \"missing.csv\"\n").unwrap();
        assert!(RunConfig::load(&cfg_path).is_err());
        std::fs::write(dir.path().join("missing.csv"), "").unwrap();
        let cfg = RunConfig::load(&cfg_path).unwrap();
        assert_eq!(cfg.datasets[0].path, dir.path().join("missing.csv"));
    }
}
