//! `respire`: calibration of low-cost CO sensors against a reference
//! analyzer.
//!
//! Exit codes: 0 success, 1 a checked property failed, 2 usage or I/O error.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Parser, Subcommand, ValueEnum};

use commands::Outcome;
use respire::evaluation::DEFAULT_OVERFIT_TAU;
use respire::synthlab::{InnerFit, SynthSpec};
use respire::transfer::Method;

#[derive(Parser)]
#[command(name = "respire", version, about = "Robust semi-parametric calibration of low-cost CO sensors")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum, Debug)]
enum InnerArg {
    /// The production ridge fit inside the corruption loop.
    Ridge,
    /// Least squares on the top-s eigenspace of the system matrix.
    Eigenspace,
}

#[derive(Subcommand)]
enum Command {
    /// Resample raw sensor and reference CSVs to 15-minute windows and align them.
    Ingest {
        #[arg(long)]
        sensor: PathBuf,
        #[arg(long)]
        reference: PathBuf,
        /// Defaults to the sensor file's stem.
        #[arg(long)]
        sensor_id: Option<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Tune on the training split, fit, and write a model file.
    Fit {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        model: PathBuf,
        /// Also write the cross-validation table.
        #[arg(long)]
        cv_table: Option<PathBuf>,
    },
    /// Score a model on the test split of a dataset (robust-R² curve CSV).
    Evaluate {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Defaults to `<output_dir>/eval_curve.csv`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write the cross-validation table of the configured grid.
    Tune {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Defaults to `<output_dir>/cv_table.csv`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train on every configured dataset and test on every other one.
    TransferMatrix {
        #[arg(long)]
        config: PathBuf,
        /// Defaults to `<output_dir>/transfer_matrix.csv`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Scenarios S1 to S5 between two co-located sensors, in both directions.
    SensorTransfer {
        #[arg(long)]
        source: PathBuf,
        #[arg(long)]
        target: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value = "RESPIRE")]
        method: Method,
        /// Defaults to `<output_dir>/sensor_transfer.csv`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Test R² of a model compressed to several retention levels.
    Compress {
        #[arg(long)]
        model: PathBuf,
        /// The dataset the model was fit on.
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Comma-separated retention fractions; defaults to the config's levels.
        #[arg(long, value_delimiter = ',')]
        levels: Option<Vec<f64>>,
        /// Defaults to `<output_dir>/compression.csv`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Weight and bias curves over the training temperature range, with the overfit flag.
    Diagnose {
        #[arg(long)]
        model: PathBuf,
        #[arg(long, default_value_t = DEFAULT_OVERFIT_TAU)]
        tau: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Check the PSD and eigenvalue lemmas and run the recovery suites on synthetic instances.
    SynthVerify {
        #[arg(long, default_value_t = 400)]
        n: usize,
        #[arg(long, default_value_t = 5)]
        s: usize,
        /// Corruption count; defaults to floor(sqrt(N)).
        #[arg(long)]
        k: Option<usize>,
        #[arg(long, default_value_t = 0.5)]
        h: f64,
        #[arg(long, default_value_t = 1.0)]
        r: f64,
        #[arg(long = "big-r", default_value_t = 2.0)]
        big_r: f64,
        #[arg(long, default_value_t = 1.0)]
        corruption_scale: f64,
        /// Noise level of the noisy recovery suite.
        #[arg(long, default_value_t = 1e-3)]
        noise_sigma: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 20)]
        seeds: u64,
        #[arg(long, value_enum, default_value_t = InnerArg::Ridge)]
        inner: InnerArg,
        #[arg(long, default_value_t = 100)]
        max_iters: usize,
        #[arg(long, default_value_t = 500)]
        psd_trials: usize,
        #[arg(long, default_value_t = 200)]
        eigen_trials: usize,
        #[arg(long, default_value_t = 8)]
        lemma_dim: usize,
        /// Skip the k = N/2 breakdown demonstration.
        #[arg(long)]
        no_breakdown: bool,
        /// Directory for the report and error-trace CSVs.
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Write a synthetic aligned dataset with a realistic temperature cycle.
    SynthData {
        #[arg(long, default_value_t = 500)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Unix time of the first record.
        #[arg(long)]
        start_unix: Option<i64>,
        /// Fraction of targets to corrupt.
        #[arg(long, default_value_t = 0.0)]
        outlier_frac: f64,
        /// Outlier size as a multiple of max |y|.
        #[arg(long, default_value_t = 5.0)]
        outlier_scale: f64,
        /// Swap the two potential columns.
        #[arg(long)]
        swap_ops: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write a config file with every default spelled out.
    InitConfig {
        #[arg(long)]
        out: PathBuf,
    },
}

fn run(cmd: Command) -> Result<Outcome> {
    use commands::*;
    match cmd {
        Command::Ingest {
            sensor,
            reference,
            sensor_id,
            out,
        } => ingest(&sensor, &reference, sensor_id.as_deref(), &out),
        Command::Fit {
            data,
            config,
            model,
            cv_table,
        } => fit(&load_config(config.as_deref())?, &data, &model, cv_table.as_deref()),
        Command::Evaluate {
            model,
            data,
            config,
            out,
        } => {
            let cfg = load_config(config.as_deref())?;
            let out = out_path(out, &cfg, "eval_curve.csv");
            evaluate(&cfg, &model, &data, &out)
        }
        Command::Tune { data, config, out } => {
            let cfg = load_config(config.as_deref())?;
            let out = out_path(out, &cfg, "cv_table.csv");
            tune(&cfg, &data, &out)
        }
        Command::TransferMatrix { config, out } => {
            let cfg = load_config(Some(&config))?;
            let out = out_path(out, &cfg, "transfer_matrix.csv");
            transfer_matrix(&cfg, &out)
        }
        Command::SensorTransfer {
            source,
            target,
            config,
            method,
            out,
        } => {
            let cfg = load_config(config.as_deref())?;
            let out = out_path(out, &cfg, "sensor_transfer.csv");
            sensor_transfer(&cfg, &source, &target, method, &out)
        }
        Command::Compress {
            model,
            data,
            config,
            levels,
            out,
        } => {
            let cfg = load_config(config.as_deref())?;
            let out = out_path(out, &cfg, "compression.csv");
            let levels = levels.unwrap_or_else(|| cfg.compression_levels.clone());
            compress_sweep(&cfg, &model, &data, &levels, &out)
        }
        Command::Diagnose { model, tau, out } => diagnose(&model, tau, &out),
        Command::SynthVerify {
            n,
            s,
            k,
            h,
            r,
            big_r,
            corruption_scale,
            noise_sigma,
            seed,
            seeds,
            inner,
            max_iters,
            psd_trials,
            eigen_trials,
            lemma_dim,
            no_breakdown,
            out_dir,
        } => {
            let args = SynthVerifyArgs {
                spec: SynthSpec {
                    n_points: n,
                    s,
                    k: k.unwrap_or((n as f64).sqrt().floor() as usize),
                    r,
                    big_r,
                    h,
                    noise_sigma: 0.0,
                    corruption_scale,
                    seed,
                },
                seeds,
                noise_sigma,
                inner: match inner {
                    InnerArg::Ridge => InnerFit::Ridge { lambda: None },
                    InnerArg::Eigenspace => InnerFit::Eigenspace,
                },
                max_iters,
                psd_trials,
                eigen_trials,
                lemma_dim,
                breakdown: !no_breakdown,
            };
            synth_verify(&args, out_dir.as_deref())
        }
        Command::SynthData {
            n,
            seed,
            start_unix,
            outlier_frac,
            outlier_scale,
            swap_ops,
            out,
        } => synth_data(
            &SynthDataArgs {
                n_points: n,
                seed,
                start_unix,
                outlier_frac,
                outlier_scale,
                swap_ops,
            },
            &out,
        ),
        Command::InitConfig { out } => write_default_config(&out),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(2) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli.command) {
        Ok(Outcome::Success) => ExitCode::SUCCESS,
        Ok(Outcome::Failed(msg)) => {
            eprintln!("failed: {msg}");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
