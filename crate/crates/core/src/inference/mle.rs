//! Maximum-likelihood fitting.
//!
//! The exact route enumerates the volume table, checks that the observation
//! lies in the relative interior of the attainable hull, and runs damped
//! Newton with exact moments.  The Monte-Carlo route replaces the moments
//! with Gibbs estimates and stops when the stochastic gradient is
//! indistinguishable from sampling noise three times in a row.  Both routes
//! solve the same moment-matching equation E_θ[T] = observed.

use serde::{Deserialize, Serialize};

use crate::expfam::{marginal_volume_table, MarginalTable};
use crate::inference::hull::interior_face;
use crate::inference::linalg::{inf_norm, l2_norm, solve};
use crate::inference::sampler::{GibbsSampler, SamplerConfig};
use crate::statespace::{IndexSet, SiteSpaceFamily};
use crate::statistics::{CovariateTable, StatVector, StatisticSpec};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FitMethod {
    Exact,
    Mcmc,
}

#[derive(Debug, Clone, Serialize)]
pub struct MleResult {
    pub theta_hat: Vec<f64>,
    /// Raw observed statistic when the fit targeted an integer observation.
    pub observed_stat: Option<StatVector>,
    /// Scaled target the gradient was driven to.
    pub observed: Vec<f64>,
    /// Scaled E_{θ̂}[T].
    pub fitted_mean: Vec<f64>,
    pub iterations: u32,
    pub converged: bool,
    pub grad_norm: f64,
    pub method: FitMethod,
    /// Monte-Carlo standard error of each θ̂ component; absent for exact fits.
    pub mc_stderr: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Copy)]
pub struct MleOptions {
    pub max_iterations: u32,
    /// Relative gradient tolerance: converged when
    /// ‖E_θ[T] − target‖∞ ≤ grad_tol · max(1, ‖target‖∞).
    pub grad_tol: f64,
    pub max_halvings: u32,
}

impl Default for MleOptions {
    fn default() -> Self {
        MleOptions { max_iterations: 100, grad_tol: 1e-9, max_halvings: 50 }
    }
}

/// Exact MLE for an integer observation.  The observation must sit in the
/// relative interior of the convex hull of attainable statistics or the MLE
/// does not exist.
pub fn fit_mle_exact(
    spec: &StatisticSpec,
    family: &SiteSpaceFamily,
    a: IndexSet,
    observed: &StatVector,
    cov: Option<&CovariateTable>,
    guard: u64,
    opts: &MleOptions,
) -> Result<MleResult> {
    if observed.dim() != spec.dim() {
        return Err(Error::DimensionMismatch { expected: spec.dim(), got: observed.dim() });
    }
    let table = marginal_volume_table(spec, family, a, cov, guard)?;
    let raw: Vec<f64> = observed.as_slice().iter().map(|&v| v as f64).collect();
    if let Some(face) = interior_face(table.entries().keys(), &raw) {
        return Err(Error::BoundaryObservation { face });
    }
    let target = spec.scaled(observed);
    let mut result = newton_exact(&table, spec, &target, opts)?;
    result.observed_stat = Some(observed.clone());
    Ok(result)
}

/// Exact fit driven to a real-valued scaled mean, e.g. E_{θ*}[T] when
/// inverting the mean map.  Same hull requirement, checked in raw units.
pub fn fit_mle_to_mean(
    spec: &StatisticSpec,
    family: &SiteSpaceFamily,
    a: IndexSet,
    target: &[f64],
    cov: Option<&CovariateTable>,
    guard: u64,
    opts: &MleOptions,
) -> Result<MleResult> {
    if target.len() != spec.dim() {
        return Err(Error::DimensionMismatch { expected: spec.dim(), got: target.len() });
    }
    if target.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteParameter);
    }
    let table = marginal_volume_table(spec, family, a, cov, guard)?;
    let scales = spec.scales();
    let raw: Vec<f64> = target.iter().zip(&scales).map(|(t, s)| t / s).collect();
    if let Some(face) = interior_face(table.entries().keys(), &raw) {
        return Err(Error::BoundaryObservation { face });
    }
    newton_exact(&table, spec, target, opts)
}

fn newton_exact(
    table: &MarginalTable,
    spec: &StatisticSpec,
    target: &[f64],
    opts: &MleOptions,
) -> Result<MleResult> {
    let d = spec.dim();
    let tol = opts.grad_tol * inf_norm(target).max(1.0);
    let mut theta = vec![0.0; d];
    let (mut mean, mut cov) = table.moments(spec, &theta);
    for k in 0..opts.max_iterations {
        let g: Vec<f64> = mean.iter().zip(target).map(|(m, t)| m - t).collect();
        let mut gnorm = inf_norm(&g);
        if gnorm <= tol {
            // One full polishing step: quadratic convergence turns a
            // just-under-tolerance gradient into a machine-precision root.
            if gnorm > 0.0 {
                if let Ok(step) = solve(&cov, &g) {
                    let trial: Vec<f64> =
                        theta.iter().zip(&step).map(|(t, s)| t - s).collect();
                    let (m2, _) = table.moments(spec, &trial);
                    let g2norm = inf_norm(
                        &m2.iter().zip(target).map(|(m, t)| m - t).collect::<Vec<_>>(),
                    );
                    if g2norm < gnorm {
                        theta = trial;
                        mean = m2;
                        gnorm = g2norm;
                    }
                }
            }
            return Ok(MleResult {
                theta_hat: theta,
                observed_stat: None,
                observed: target.to_vec(),
                fitted_mean: mean,
                iterations: k,
                converged: true,
                grad_norm: gnorm,
                method: FitMethod::Exact,
                mc_stderr: None,
            });
        }
        let step = solve(&cov, &g)?;
        let mut lambda = 1.0;
        let mut accepted = false;
        for _ in 0..=opts.max_halvings {
            let trial: Vec<f64> =
                theta.iter().zip(&step).map(|(t, s)| t - lambda * s).collect();
            let (m2, c2) = table.moments(spec, &trial);
            let g2norm =
                inf_norm(&m2.iter().zip(target).map(|(m, t)| m - t).collect::<Vec<_>>());
            if g2norm < gnorm {
                theta = trial;
                mean = m2;
                cov = c2;
                accepted = true;
                break;
            }
            lambda *= 0.5;
        }
        if !accepted {
            return Err(Error::MaxIterations { iterations: k + 1 });
        }
    }
    Err(Error::MaxIterations { iterations: opts.max_iterations })
}

/// Monte-Carlo MLE.  Each iteration reseeds a fresh chain with
/// `cfg.seed ⊕ iteration`, so the whole fit is a pure function of its
/// inputs.  Once the gradient estimate drops below 3× its standard error
/// the update is suspended and two further independent confirmations are
/// required before declaring convergence.
#[allow(clippy::too_many_arguments)]
pub fn fit_mle_mcmc(
    spec: &StatisticSpec,
    family: &SiteSpaceFamily,
    a: IndexSet,
    observed: &StatVector,
    cov: Option<&CovariateTable>,
    cfg: &SamplerConfig,
    theta0: &[f64],
    opts: &MleOptions,
) -> Result<MleResult> {
    cfg.validate()?;
    if observed.dim() != spec.dim() || theta0.len() != spec.dim() {
        return Err(Error::DimensionMismatch {
            expected: spec.dim(),
            got: observed.dim().max(theta0.len()),
        });
    }
    if cfg.sample_count < 2 {
        return Err(Error::InvalidArgument {
            detail: "covariance estimation needs at least 2 samples".into(),
        });
    }
    let d = spec.dim();
    let target = spec.scaled(observed);
    let mut theta = theta0.to_vec();
    let mut consecutive = 0u32;
    for k in 0..opts.max_iterations {
        let (mean, covm) =
            sample_moments(spec, family, a, &theta, cov, cfg, cfg.seed ^ k as u64)?;
        let m = cfg.sample_count as f64;
        let collapsed = (0..d).all(|j| covm[j][j] <= 1e-12 * mean[j].mul_add(mean[j], 1.0));
        if collapsed {
            return Err(Error::Degenerate {
                detail: "chain produced a near-constant statistic; the model is stuck".into(),
            });
        }
        let g: Vec<f64> = mean.iter().zip(&target).map(|(m, t)| m - t).collect();
        let gnorm = l2_norm(&g);
        let se = ((0..d).map(|j| covm[j][j]).sum::<f64>() / m).sqrt();
        if gnorm <= 3.0 * se {
            consecutive += 1;
            if consecutive == 3 {
                return Ok(MleResult {
                    theta_hat: theta.clone(),
                    observed_stat: Some(observed.clone()),
                    observed: target,
                    fitted_mean: mean,
                    iterations: k + 1,
                    converged: true,
                    grad_norm: gnorm,
                    method: FitMethod::Mcmc,
                    mc_stderr: Some(estimate_stderr(&covm, m)?),
                });
            }
            continue;
        }
        consecutive = 0;
        let mut step = solve(&covm, &g)?;
        let norm = l2_norm(&step);
        if norm > 2.0 {
            for s in step.iter_mut() {
                *s *= 2.0 / norm;
            }
        }
        for (t, s) in theta.iter_mut().zip(&step) {
            *t -= s;
        }
    }
    Err(Error::MaxIterations { iterations: opts.max_iterations })
}

/// Scaled sample mean and covariance of the statistic under `theta`.
#[allow(clippy::needless_range_loop, clippy::too_many_arguments)]
fn sample_moments(
    spec: &StatisticSpec,
    family: &SiteSpaceFamily,
    a: IndexSet,
    theta: &[f64],
    cov: Option<&CovariateTable>,
    cfg: &SamplerConfig,
    seed: u64,
) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    let d = spec.dim();
    let mut chain = GibbsSampler::new(spec, family, a, theta, cov, seed)?;
    for _ in 0..cfg.burn_in {
        chain.sweep();
    }
    let m = cfg.sample_count as usize;
    let mut stats = Vec::with_capacity(m);
    for _ in 0..m {
        for _ in 0..cfg.thinning {
            chain.sweep();
        }
        stats.push(spec.scaled(chain.statistic()));
    }
    let mut mean = vec![0.0; d];
    for s in &stats {
        for (acc, v) in mean.iter_mut().zip(s) {
            *acc += v;
        }
    }
    for acc in mean.iter_mut() {
        *acc /= m as f64;
    }
    let mut covm = vec![vec![0.0; d]; d];
    for s in &stats {
        for i in 0..d {
            let di = s[i] - mean[i];
            for j in i..d {
                covm[i][j] += di * (s[j] - mean[j]);
            }
        }
    }
    for i in 0..d {
        for j in i..d {
            covm[i][j] /= (m - 1) as f64;
            covm[j][i] = covm[i][j];
        }
    }
    Ok((mean, covm))
}

/// Standard error of θ̂ from the sandwich approximation Var(θ̂) ≈ H⁻¹/m.
fn estimate_stderr(covm: &[Vec<f64>], m: f64) -> Result<Vec<f64>> {
    let d = covm.len();
    let mut out = Vec::with_capacity(d);
    for j in 0..d {
        let mut unit = vec![0.0; d];
        unit[j] = 1.0;
        let col = solve(covm, &unit)?;
        out.push((col[j].max(0.0) / m).sqrt());
    }
    Ok(out)
}
