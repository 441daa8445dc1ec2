//! Legendre-transform rate function
//! J(t) = sup_φ ⟨φ, t⟩ − [a(θ+φ) − a(θ)].
//!
//! The objective is concave in φ, so Newton ascent from φ = 0 with step
//! halving converges whenever t lies in the interior of the mean range.
//! Every accepted step strictly increases the objective and the start value
//! is 0, which makes J ≥ 0 structural.  Targets outside the closure of the
//! mean range push φ off to infinity; the walk is step-clipped, and
//! crossing the φ cap is reported as the unbounded flag rather than an
//! error.

use serde::Serialize;

use crate::expfam::MarginalTable;
use crate::inference::linalg::{inf_norm, l2_norm, solve};
use crate::statistics::StatisticSpec;
use crate::{Error, Result};

pub enum LogPartitionFn<'a> {
    /// Exact log partition with moments from an enumerated volume table.
    Table { table: &'a MarginalTable, spec: &'a StatisticSpec },
    /// Black-box log partition; derivatives by central finite differences.
    Handle { f: &'a dyn Fn(&[f64]) -> f64, dim: usize },
}

impl LogPartitionFn<'_> {
    pub fn dim(&self) -> usize {
        match self {
            LogPartitionFn::Table { spec, .. } => spec.dim(),
            LogPartitionFn::Handle { dim, .. } => *dim,
        }
    }

    fn value(&self, point: &[f64]) -> f64 {
        match self {
            LogPartitionFn::Table { table, spec } => table.log_partition(spec, point),
            LogPartitionFn::Handle { f, .. } => f(point),
        }
    }

    fn gradient(&self, point: &[f64], step: f64) -> Vec<f64> {
        match self {
            LogPartitionFn::Table { table, spec } => table.moments(spec, point).0,
            LogPartitionFn::Handle { f, dim } => {
                let mut g = Vec::with_capacity(*dim);
                let mut p = point.to_vec();
                for j in 0..*dim {
                    p[j] = point[j] + step;
                    let hi = f(&p);
                    p[j] = point[j] - step;
                    let lo = f(&p);
                    p[j] = point[j];
                    g.push((hi - lo) / (2.0 * step));
                }
                g
            }
        }
    }

    fn hessian(&self, point: &[f64], step: f64) -> Vec<Vec<f64>> {
        match self {
            LogPartitionFn::Table { table, spec } => table.moments(spec, point).1,
            LogPartitionFn::Handle { f, dim } => {
                let d = *dim;
                let f0 = f(point);
                let mut h = vec![vec![0.0; d]; d];
                let mut p = point.to_vec();
                for i in 0..d {
                    p[i] = point[i] + step;
                    let hi = f(&p);
                    p[i] = point[i] - step;
                    let lo = f(&p);
                    p[i] = point[i];
                    h[i][i] = (hi - 2.0 * f0 + lo) / (step * step);
                }
                for i in 0..d {
                    for j in i + 1..d {
                        let mut corner = |si: f64, sj: f64| {
                            p[i] = point[i] + si * step;
                            p[j] = point[j] + sj * step;
                            let v = f(&p);
                            p[i] = point[i];
                            p[j] = point[j];
                            v
                        };
                        let v = (corner(1.0, 1.0) - corner(1.0, -1.0) - corner(-1.0, 1.0)
                            + corner(-1.0, -1.0))
                            / (4.0 * step * step);
                        h[i][j] = v;
                        h[j][i] = v;
                    }
                }
                h
            }
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct RateOptions {
    pub grad_tol: f64,
    pub max_iterations: u32,
    pub max_halvings: u32,
    pub fd_step: f64,
    /// ‖φ‖∞ beyond which the supremum is declared unbounded.
    pub phi_cap: f64,
    /// Size constant r recorded on the evaluation.
    pub scale_constant: f64,
}

impl Default for RateOptions {
    fn default() -> Self {
        RateOptions {
            grad_tol: 1e-10,
            max_iterations: 200,
            max_halvings: 50,
            fd_step: 1e-5,
            phi_cap: 500.0,
            scale_constant: 1.0,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RateFunctionEval {
    pub t: Vec<f64>,
    pub theta: Vec<f64>,
    /// J(t); +∞ when `bounded` is false.
    pub value: f64,
    pub phi_star: Vec<f64>,
    pub scale_constant: f64,
    pub bounded: bool,
    pub iterations: u32,
    pub grad_norm: f64,
}

const MAX_STEP_NORM: f64 = 10.0;

pub fn rate_function(
    a: &LogPartitionFn,
    theta: &[f64],
    t: &[f64],
    opts: &RateOptions,
) -> Result<RateFunctionEval> {
    let d = a.dim();
    if theta.len() != d || t.len() != d {
        return Err(Error::DimensionMismatch { expected: d, got: theta.len().max(t.len()) });
    }
    if theta.iter().chain(t).any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteParameter);
    }

    let a0 = a.value(theta);
    let objective = |phi: &[f64]| -> f64 {
        let point: Vec<f64> = theta.iter().zip(phi).map(|(th, p)| th + p).collect();
        let dot: f64 = phi.iter().zip(t).map(|(p, v)| p * v).sum();
        dot - (a.value(&point) - a0)
    };

    let mut phi = vec![0.0; d];
    let mut h = 0.0;
    for k in 0..opts.max_iterations {
        let point: Vec<f64> = theta.iter().zip(&phi).map(|(th, p)| th + p).collect();
        let grad: Vec<f64> = a
            .gradient(&point, opts.fd_step)
            .iter()
            .zip(t)
            .map(|(g, v)| v - g)
            .collect();
        let gnorm = inf_norm(&grad);
        if gnorm <= opts.grad_tol {
            return Ok(RateFunctionEval {
                t: t.to_vec(),
                theta: theta.to_vec(),
                value: h,
                phi_star: phi,
                scale_constant: opts.scale_constant,
                bounded: true,
                iterations: k,
                grad_norm: gnorm,
            });
        }
        if inf_norm(&phi) > opts.phi_cap {
            return Ok(unbounded_eval(t, theta, phi, opts, k, gnorm));
        }
        let hess = a.hessian(&point, opts.fd_step);
        // The FD curvature loses all significance far out on a flat tail;
        // a non-ascent Newton direction is replaced by a fixed-length
        // gradient step so unbounded targets keep making progress.
        let mut step = match solve(&hess, &grad) {
            Ok(s) if s.iter().zip(&grad).map(|(a, b)| a * b).sum::<f64>() > 0.0 => s,
            _ => {
                let gl = l2_norm(&grad);
                grad.iter().map(|g| g * (MAX_STEP_NORM / gl)).collect()
            }
        };
        let norm = l2_norm(&step);
        if norm > MAX_STEP_NORM {
            for s in step.iter_mut() {
                *s *= MAX_STEP_NORM / norm;
            }
        }
        let mut lambda = 1.0;
        let mut accepted = false;
        for _ in 0..=opts.max_halvings {
            let trial: Vec<f64> = phi.iter().zip(&step).map(|(p, s)| p + lambda * s).collect();
            let h2 = objective(&trial);
            // Non-strict: near the optimum a whole Newton step can improve
            // the objective by less than one ulp while still tightening the
            // gradient quadratically.
            if h2.is_finite() && h2 >= h {
                phi = trial;
                h = h2;
                accepted = true;
                break;
            }
            lambda *= 0.5;
        }
        if !accepted {
            if inf_norm(&phi) > 0.5 * opts.phi_cap {
                return Ok(unbounded_eval(t, theta, phi, opts, k + 1, gnorm));
            }
            return Err(Error::MaxIterations { iterations: k + 1 });
        }
    }
    Err(Error::MaxIterations { iterations: opts.max_iterations })
}

fn unbounded_eval(
    t: &[f64],
    theta: &[f64],
    phi: Vec<f64>,
    opts: &RateOptions,
    iterations: u32,
    grad_norm: f64,
) -> RateFunctionEval {
    RateFunctionEval {
        t: t.to_vec(),
        theta: theta.to_vec(),
        value: f64::INFINITY,
        phi_star: phi,
        scale_constant: opts.scale_constant,
        bounded: false,
        iterations,
        grad_norm,
    }
}
