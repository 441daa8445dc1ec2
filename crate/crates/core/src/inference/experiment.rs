//! Error-decay experiments across nested sizes.
//!
//! Two variants run side by side.  Resampled: draw fresh data from θ* at
//! every size and refit.  Projected: draw once at the largest size, restrict
//! the same configuration to each smaller index set, and refit there.  For
//! projective models both tell the same story; for non-projective ones the
//! projected column drifts away from θ*.
//!
//! Every task derives its seed as master ⊕ task index, so the full table is
//! a pure function of the configuration regardless of thread scheduling.
//! Replicates whose fit fails (a boundary observation, say) are recorded
//! with the error code in the status column, not dropped.

use rayon::prelude::*;
use serde::Serialize;

use crate::inference::linalg::l2_norm;
use crate::inference::mle::{fit_mle_exact, fit_mle_mcmc, MleOptions, MleResult};
use crate::inference::sampler::{GibbsSampler, SamplerConfig};
use crate::statespace::{Configuration, IndexSet, SiteSpaceFamily};
use crate::statistics::{CovariateTable, Evaluator, StatVector, StatisticSpec};
use crate::{Error, Result};

/// Decorrelates the fitting chains from the data-generating chain.
const FIT_SEED_SALT: u64 = 0x9e3779b97f4a7c15;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentVariant {
    Resampled,
    Projected,
}

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub theta_star: Vec<f64>,
    pub sizes: Vec<u32>,
    pub replicates: u32,
    pub sampler: SamplerConfig,
    pub guard: u64,
    pub mle: MleOptions,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReplicateRow {
    pub size: u32,
    pub replicate: u32,
    pub seed: u64,
    pub theta_hat: Option<Vec<f64>>,
    /// ‖θ̂ − θ*‖₂ when the fit succeeded.
    pub error: Option<f64>,
    pub status: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VariantTable {
    pub variant: ExperimentVariant,
    pub rows: Vec<ReplicateRow>,
}

impl VariantTable {
    /// Median fit error per size, over the replicates that produced one.
    pub fn median_errors(&self) -> Vec<(u32, f64)> {
        let mut sizes: Vec<u32> = self.rows.iter().map(|r| r.size).collect();
        sizes.dedup();
        let mut out = Vec::new();
        for size in sizes {
            let mut errs: Vec<f64> = self
                .rows
                .iter()
                .filter(|r| r.size == size)
                .filter_map(|r| r.error)
                .collect();
            if errs.is_empty() {
                continue;
            }
            errs.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let mid = errs.len() / 2;
            let median = if errs.len() % 2 == 1 {
                errs[mid]
            } else {
                0.5 * (errs[mid - 1] + errs[mid])
            };
            out.push((size, median));
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentResult {
    pub theta_star: Vec<f64>,
    pub sizes: Vec<u32>,
    pub replicates: u32,
    pub resampled: VariantTable,
    pub projected: VariantTable,
}

pub fn consistency_experiment(
    spec: &StatisticSpec,
    family: &SiteSpaceFamily,
    cov: Option<&CovariateTable>,
    cfg: &ExperimentConfig,
) -> Result<ExperimentResult> {
    cfg.sampler.validate()?;
    if cfg.theta_star.len() != spec.dim() {
        return Err(Error::DimensionMismatch { expected: spec.dim(), got: cfg.theta_star.len() });
    }
    if cfg.theta_star.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteParameter);
    }
    if cfg.sizes.is_empty() || cfg.sizes.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidArgument {
            detail: "sizes must be non-empty and strictly increasing".into(),
        });
    }
    if cfg.replicates == 0 {
        return Err(Error::InvalidArgument { detail: "need at least one replicate".into() });
    }

    let enumerable: Vec<bool> = cfg
        .sizes
        .iter()
        .map(|&n| {
            let a = IndexSet::new(n)?;
            Evaluator::new(spec, family, a, cov)?;
            Ok(family.shape(a)?.guarded_size(cfg.guard).is_ok())
        })
        .collect::<Result<_>>()?;
    if enumerable.iter().any(|e| !e) && cfg.sampler.sample_count < 2 {
        return Err(Error::InvalidArgument {
            detail: "Monte-Carlo fits need a sample count of at least 2".into(),
        });
    }

    let reps = cfg.replicates as usize;
    let resampled_tasks = cfg.sizes.len() * reps;

    let mut resampled_rows: Vec<ReplicateRow> = (0..resampled_tasks)
        .into_par_iter()
        .map(|task| -> Result<ReplicateRow> {
            let si = task / reps;
            let rep = (task % reps) as u32;
            let size = cfg.sizes[si];
            let seed = cfg.sampler.seed ^ task as u64;
            let a = IndexSet::new(size)?;
            let observed = simulate_statistic(spec, family, a, cov, cfg, seed)?;
            Ok(fit_row(
                spec, family, a, &observed, cov, cfg, enumerable[si], seed, size, rep,
            ))
        })
        .collect::<Result<_>>()?;

    let n_max = *cfg.sizes.last().unwrap();
    let b = IndexSet::new(n_max)?;
    let mut projected_rows: Vec<ReplicateRow> = (0..reps)
        .into_par_iter()
        .map(|rep| -> Result<Vec<ReplicateRow>> {
            let seed = cfg.sampler.seed ^ (resampled_tasks + rep) as u64;
            let x_max = simulate_configuration(spec, family, b, cov, cfg, seed)?;
            let mut rows = Vec::with_capacity(cfg.sizes.len());
            for (si, &size) in cfg.sizes.iter().enumerate() {
                let a = IndexSet::new(size)?;
                let x_a = family.project_configuration(&x_max, b, a)?;
                let observed = Evaluator::new(spec, family, a, cov)?.eval(&x_a);
                rows.push(fit_row(
                    spec,
                    family,
                    a,
                    &observed,
                    cov,
                    cfg,
                    enumerable[si],
                    seed ^ ((si as u64) << 32),
                    size,
                    rep as u32,
                ));
            }
            Ok(rows)
        })
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .flatten()
        .collect();

    resampled_rows.sort_by_key(|r| (r.size, r.replicate));
    projected_rows.sort_by_key(|r| (r.size, r.replicate));
    Ok(ExperimentResult {
        theta_star: cfg.theta_star.clone(),
        sizes: cfg.sizes.clone(),
        replicates: cfg.replicates,
        resampled: VariantTable { variant: ExperimentVariant::Resampled, rows: resampled_rows },
        projected: VariantTable { variant: ExperimentVariant::Projected, rows: projected_rows },
    })
}

fn simulate_configuration(
    spec: &StatisticSpec,
    family: &SiteSpaceFamily,
    a: IndexSet,
    cov: Option<&CovariateTable>,
    cfg: &ExperimentConfig,
    seed: u64,
) -> Result<Configuration> {
    let mut chain = GibbsSampler::new(spec, family, a, &cfg.theta_star, cov, seed)?;
    for _ in 0..cfg.sampler.burn_in + cfg.sampler.thinning {
        chain.sweep();
    }
    Ok(chain.state().clone())
}

fn simulate_statistic(
    spec: &StatisticSpec,
    family: &SiteSpaceFamily,
    a: IndexSet,
    cov: Option<&CovariateTable>,
    cfg: &ExperimentConfig,
    seed: u64,
) -> Result<StatVector> {
    let mut chain = GibbsSampler::new(spec, family, a, &cfg.theta_star, cov, seed)?;
    for _ in 0..cfg.sampler.burn_in + cfg.sampler.thinning {
        chain.sweep();
    }
    Ok(chain.statistic().clone())
}

#[allow(clippy::too_many_arguments)]
fn fit_row(
    spec: &StatisticSpec,
    family: &SiteSpaceFamily,
    a: IndexSet,
    observed: &StatVector,
    cov: Option<&CovariateTable>,
    cfg: &ExperimentConfig,
    exact: bool,
    seed: u64,
    size: u32,
    replicate: u32,
) -> ReplicateRow {
    let theta0 = vec![0.0; spec.dim()];
    let fit: Result<MleResult> = if exact {
        fit_mle_exact(spec, family, a, observed, cov, cfg.guard, &cfg.mle)
    } else {
        let fit_cfg = SamplerConfig { seed: seed ^ FIT_SEED_SALT, ..cfg.sampler };
        fit_mle_mcmc(spec, family, a, observed, cov, &fit_cfg, &theta0, &cfg.mle)
    };
    match fit {
        Ok(res) => {
            let diff: Vec<f64> = res
                .theta_hat
                .iter()
                .zip(&cfg.theta_star)
                .map(|(h, s)| h - s)
                .collect();
            ReplicateRow {
                size,
                replicate,
                seed,
                error: Some(l2_norm(&diff)),
                theta_hat: Some(res.theta_hat),
                status: "ok".into(),
            }
        }
        Err(e) => ReplicateRow {
            size,
            replicate,
            seed,
            theta_hat: None,
            error: None,
            status: e.code().into(),
        },
    }
}
