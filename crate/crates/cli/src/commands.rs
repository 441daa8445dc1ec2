//! Command implementations: each takes a validated model plus parsed flags,
//! runs the corresponding library operation, and returns the JSON payload
//! together with the process exit code.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::Value;

use projcheck_core::expfam::{self, ExpFamModel};
use projcheck_core::inference::{
    consistency_experiment, default_size_measure, fit_mle_exact, fit_mle_mcmc, fit_mle_to_mean,
    gibbs_sample, rate_function, scaling_profile, ExperimentConfig, LogPartitionFn, MleOptions,
    RateOptions, SamplerConfig, VariantTable,
};
use projcheck_core::projectivity::{projectivity_report, ReportOptions};
use projcheck_core::statespace::IndexSet;
use projcheck_core::statistics::{Evaluator, StatVector};
use projcheck_core::{Error, Tolerance};

use crate::modelspec::ExperimentBlock;

/// Failures a command can hit: model-level errors from the library, or i/o
/// on the output artifacts.
#[derive(Debug, thiserror::Error)]
pub enum CmdError {
    #[error(transparent)]
    Model(#[from] Error),
    #[error("{0}")]
    Io(#[from] std::io::Error),
}

impl CmdError {
    pub fn code(&self) -> &'static str {
        match self {
            CmdError::Model(e) => e.code(),
            CmdError::Io(_) => "Io",
        }
    }

    /// Internal inconsistencies exit 3; everything else is a usage or model
    /// problem and exits 2.
    pub fn exit_code(&self) -> i32 {
        match self {
            CmdError::Model(Error::InternalInconsistency { .. }) => 3,
            _ => 2,
        }
    }
}

pub type CmdResult<T> = std::result::Result<T, CmdError>;

fn to_value<T: Serialize>(payload: &T) -> Value {
    serde_json::to_value(payload).expect("payload serializes")
}

/// `--tol` scales both tolerance legs, keeping the default rel:abs ratio.
fn check_tolerance(tol: Option<f64>) -> Tolerance {
    match tol {
        Some(rel) => Tolerance::new(rel, rel * 1e-3),
        None => Tolerance::default(),
    }
}

fn mle_options(tol: Option<f64>) -> MleOptions {
    let mut opts = MleOptions::default();
    if let Some(t) = tol {
        opts.grad_tol = t;
    }
    opts
}

fn sampler_config(
    block: Option<&ExperimentBlock>,
    seed: Option<u64>,
    count: Option<u32>,
    default_count: u32,
) -> SamplerConfig {
    let mut cfg = match block {
        Some(b) => SamplerConfig {
            seed: b.seed,
            burn_in: b.burn_in,
            thinning: b.thinning,
            sample_count: b.sample_count,
        },
        None => SamplerConfig { seed: 0, burn_in: 1000, thinning: 10, sample_count: default_count },
    };
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if let Some(c) = count {
        cfg.sample_count = c;
    }
    cfg
}

pub fn run_check(
    model: &ExpFamModel,
    sub: u32,
    sup: u32,
    theta_grid: Option<Vec<Vec<f64>>>,
    tol: Option<f64>,
    guard: u64,
) -> CmdResult<(Value, i32)> {
    let opts = ReportOptions { theta_grid, tolerance: check_tolerance(tol), guard };
    let report = projectivity_report(
        &model.stat,
        &model.family,
        IndexSet::new(sub)?,
        IndexSet::new(sup)?,
        model.cov_ref(),
        &opts,
    )?;
    let exit = if report.all_pass { 0 } else { 1 };
    Ok((to_value(&report), exit))
}

pub fn run_fit(
    model: &ExpFamModel,
    experiment: Option<&ExperimentBlock>,
    sub: u32,
    observed: &[f64],
    seed: Option<u64>,
    tol: Option<f64>,
    guard: u64,
) -> CmdResult<(Value, i32)> {
    let a = IndexSet::new(sub)?;
    let opts = mle_options(tol);
    let integral = observed.iter().all(|v| v.fract() == 0.0 && v.abs() < 2f64.powi(53));
    let result = if integral {
        let stat = StatVector::new(observed.iter().map(|&v| v as i64).collect());
        match fit_mle_exact(&model.stat, &model.family, a, &stat, model.cov_ref(), guard, &opts) {
            Err(Error::SpaceTooLarge { .. }) => {
                let cfg = sampler_config(experiment, seed, None, 8192);
                let theta0 = vec![0.0; model.stat.dim()];
                fit_mle_mcmc(
                    &model.stat,
                    &model.family,
                    a,
                    &stat,
                    model.cov_ref(),
                    &cfg,
                    &theta0,
                    &opts,
                )
            }
            other => other,
        }
    } else {
        // Fractional targets are mean targets; those need the exact route.
        fit_mle_to_mean(&model.stat, &model.family, a, observed, model.cov_ref(), guard, &opts)
    }?;
    Ok((to_value(&result), 0))
}

#[derive(Serialize)]
struct SampleRow {
    configuration: String,
    statistic: Vec<i64>,
}

#[derive(Serialize)]
struct SamplePayload {
    sub: u32,
    sampler: SamplerConfig,
    samples: Vec<SampleRow>,
    mean_statistic: Vec<f64>,
}

pub fn run_sample(
    model: &ExpFamModel,
    experiment: Option<&ExperimentBlock>,
    sub: u32,
    seed: Option<u64>,
    reps: Option<u32>,
) -> CmdResult<(Value, i32)> {
    let a = IndexSet::new(sub)?;
    let cfg = sampler_config(experiment, seed, reps, 100);
    let configs = gibbs_sample(&model.stat, &model.family, a, &model.theta, model.cov_ref(), &cfg)?;
    let ev = Evaluator::new(&model.stat, &model.family, a, model.cov_ref())?;
    let mut mean = vec![0.0; model.stat.dim()];
    let mut samples = Vec::with_capacity(configs.len());
    for x in &configs {
        let t = ev.eval(x);
        for (m, v) in mean.iter_mut().zip(model.stat.scaled(&t)) {
            *m += v / configs.len() as f64;
        }
        samples.push(SampleRow {
            configuration: model.family.display(a, x),
            statistic: t.as_slice().to_vec(),
        });
    }
    let payload = SamplePayload { sub, sampler: cfg, samples, mean_statistic: mean };
    Ok((to_value(&payload), 0))
}

pub fn run_scale(
    model: &ExpFamModel,
    sizes: &[u32],
    guard: u64,
    csv_out: Option<&Path>,
) -> CmdResult<(Value, i32)> {
    let profile = scaling_profile(
        &model.stat,
        &model.family,
        sizes,
        &model.theta,
        |n| default_size_measure(&model.family, n),
        model.cov_ref(),
        guard,
    )?;
    if let Some(path) = csv_out {
        let mut f = BufWriter::new(File::create(path)?);
        writeln!(f, "n,r,log_partition,per_unit")?;
        for row in &profile.rows {
            writeln!(f, "{},{},{},{}", row.n, row.r, row.log_partition, row.per_unit)?;
        }
        f.flush()?;
    }
    Ok((to_value(&profile), 0))
}

pub fn run_rate(
    model: &ExpFamModel,
    sub: u32,
    target: &[f64],
    tol: Option<f64>,
    guard: u64,
) -> CmdResult<(Value, i32)> {
    let a = IndexSet::new(sub)?;
    let table = expfam::marginal_volume_table(&model.stat, &model.family, a, model.cov_ref(), guard)?;
    let lp = LogPartitionFn::Table { table: &table, spec: &model.stat };
    let mut opts = RateOptions::default();
    if let Some(t) = tol {
        opts.grad_tol = t;
    }
    let eval = rate_function(&lp, &model.theta, target, &opts)?;
    Ok((to_value(&eval), 0))
}

#[derive(Serialize)]
struct MedianRow {
    size: u32,
    median_error: f64,
}

#[derive(Serialize)]
struct ExperimentPayload {
    theta_star: Vec<f64>,
    sizes: Vec<u32>,
    replicates: u32,
    sampler: SamplerConfig,
    resampled_csv: String,
    projected_csv: String,
    resampled_median_error: Vec<MedianRow>,
    projected_median_error: Vec<MedianRow>,
}

fn write_variant_csv(path: &Path, table: &VariantTable, dim: usize) -> std::io::Result<()> {
    let mut f = BufWriter::new(File::create(path)?);
    write!(f, "size,replicate,seed")?;
    for j in 0..dim {
        write!(f, ",theta_hat_{j}")?;
    }
    writeln!(f, ",error,status")?;
    for row in &table.rows {
        write!(f, "{},{},{}", row.size, row.replicate, row.seed)?;
        match &row.theta_hat {
            Some(theta) => {
                for v in theta {
                    write!(f, ",{v}")?;
                }
            }
            None => {
                for _ in 0..dim {
                    write!(f, ",")?;
                }
            }
        }
        match row.error {
            Some(e) => write!(f, ",{e}")?,
            None => write!(f, ",")?,
        }
        writeln!(f, ",{}", row.status)?;
    }
    f.flush()
}

/// Sibling path with `-projected` inserted before the extension.
fn projected_path(out: &Path) -> PathBuf {
    let stem = out.file_stem().and_then(|s| s.to_str()).unwrap_or("experiment");
    let ext = out.extension().and_then(|s| s.to_str()).unwrap_or("csv");
    out.with_file_name(format!("{stem}-projected.{ext}"))
}

fn medians(table: &VariantTable) -> Vec<MedianRow> {
    table
        .median_errors()
        .into_iter()
        .map(|(size, median_error)| MedianRow { size, median_error })
        .collect()
}

pub fn run_experiment(
    model: &ExpFamModel,
    block: &ExperimentBlock,
    sizes: Option<Vec<u32>>,
    seed: Option<u64>,
    reps: Option<u32>,
    out: &Path,
    guard: u64,
) -> CmdResult<(Value, i32)> {
    let cfg = ExperimentConfig {
        theta_star: block.theta_star.clone(),
        sizes: sizes.unwrap_or_else(|| block.sizes.clone()),
        replicates: reps.unwrap_or(block.replicates),
        sampler: SamplerConfig {
            seed: seed.unwrap_or(block.seed),
            burn_in: block.burn_in,
            thinning: block.thinning,
            sample_count: block.sample_count,
        },
        guard,
        mle: MleOptions::default(),
    };
    let result = consistency_experiment(&model.stat, &model.family, model.cov_ref(), &cfg)?;
    let dim = model.stat.dim();
    let projected = projected_path(out);
    write_variant_csv(out, &result.resampled, dim)?;
    write_variant_csv(&projected, &result.projected, dim)?;
    let payload = ExperimentPayload {
        theta_star: cfg.theta_star.clone(),
        sizes: cfg.sizes.clone(),
        replicates: cfg.replicates,
        sampler: cfg.sampler,
        resampled_csv: out.display().to_string(),
        projected_csv: projected.display().to_string(),
        resampled_median_error: medians(&result.resampled),
        projected_median_error: medians(&result.projected),
    };
    Ok((to_value(&payload), 0))
}
