//! Exact enumeration toolkit for discrete exponential families over growing
//! index sets.
//!
//! The library answers one central question: given a family of models
//! `p(x) ∝ exp⟨θ, t(x)⟩` defined on a nested sequence of configuration
//! spaces, is the model at a smaller index set the marginal of the model at a
//! larger one, for every θ at once?  That property is decided here by exact
//! combinatorics: the volume factors `v(t) = #{x : t(x) = t}` and their joint
//! and conditional refinements carry all the information needed, so the
//! verdicts are integer computations wherever possible and tight
//! floating-point comparisons elsewhere.
//!
//! Module map:
//!
//! * [`statespace`] — index sets, bit-packed configurations, enumeration.
//! * [`statistics`] — integer-valued sufficient statistics and increments.
//! * [`expfam`] — partition functions, statistic laws, predictive laws.
//! * [`projectivity`] — volume tables and the four consistency checks.
//! * [`inference`] — exact and Monte-Carlo MLE, scaling, rate functions.

pub mod expfam;
pub mod inference;
pub mod projectivity;
pub mod statespace;
pub mod statistics;

use serde::Serialize;

/// Default cap on the number of configurations any exhaustive sweep may
/// touch.  Callers opt into larger sweeps explicitly.
pub const DEFAULT_ENUM_GUARD: u64 = 1 << 26;

/// Comparison tolerance for real-valued quantities: `a ≈ b` when
/// `|a − b| ≤ max(abs, rel · max(|a|, |b|))`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Tolerance {
    pub rel: f64,
    pub abs: f64,
}

impl Default for Tolerance {
    fn default() -> Self {
        Tolerance { rel: 1e-9, abs: 1e-12 }
    }
}

impl Tolerance {
    pub fn new(rel: f64, abs: f64) -> Self {
        Tolerance { rel, abs }
    }

    pub fn close(&self, a: f64, b: f64) -> bool {
        let scale = a.abs().max(b.abs());
        (a - b).abs() <= self.abs.max(self.rel * scale)
    }

    /// Margin allowed between `a` and `b` under this tolerance.
    pub fn margin(&self, a: f64, b: f64) -> f64 {
        self.abs.max(self.rel * a.abs().max(b.abs()))
    }
}

/// Face of the convex hull of attainable statistic values violated by an
/// observation handed to the exact MLE.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub enum HullFace {
    /// Observation falls on or beyond a per-component bound.
    ComponentBound { component: usize, bound: i64, side: BoundSide },
    /// Observation falls on a vertex of the hull.
    Vertex { at: Vec<i64> },
    /// Observation falls on or beyond the edge through two hull vertices.
    Edge { from: Vec<i64>, to: Vec<i64> },
    /// Observation leaves the affine span of the attainable values.
    OffSpan,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum BoundSide {
    Min,
    Max,
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("index set size {n} exceeds the declared product length {declared}")]
    IndexOutOfRange { n: u32, declared: u32 },

    #[error("state space holds {size} configurations, over the enumeration guard {guard}")]
    SpaceTooLarge { size: u128, guard: u64 },

    #[error("index set of size {sub} does not nest inside index set of size {sup}")]
    NotNested { sub: u32, sup: u32 },

    #[error("lookup table has no entry for configuration {display} at size {n}")]
    IncompleteTable { n: u32, display: String },

    #[error("node {node} has no covariate value")]
    MissingCovariates { node: u32 },

    #[error("{component} is not defined on a {family} space")]
    UnsupportedStatistic { component: String, family: String },

    #[error("statistic dimension is {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("parameter vector must be finite")]
    NonFiniteParameter,

    #[error("observed statistic sits outside the interior of the attainable range")]
    BoundaryObservation { face: HullFace },

    #[error("no convergence after {iterations} iterations")]
    MaxIterations { iterations: u32 },

    #[error("sampler degenerated: {detail}")]
    Degenerate { detail: String },

    #[error("internal inconsistency: {detail}")]
    InternalInconsistency { detail: String },

    #[error("invalid argument: {detail}")]
    InvalidArgument { detail: String },
}

impl Error {
    /// Stable machine-readable code for report serialization.
    pub fn code(&self) -> &'static str {
        match self {
            Error::IndexOutOfRange { .. } => "IndexOutOfRange",
            Error::SpaceTooLarge { .. } => "SpaceTooLarge",
            Error::NotNested { .. } => "NotNested",
            Error::IncompleteTable { .. } => "IncompleteTable",
            Error::MissingCovariates { .. } => "MissingCovariates",
            Error::UnsupportedStatistic { .. } => "UnsupportedStatistic",
            Error::DimensionMismatch { .. } => "DimensionMismatch",
            Error::NonFiniteParameter => "NonFiniteParameter",
            Error::BoundaryObservation { .. } => "BoundaryObservation",
            Error::MaxIterations { .. } => "MaxIterations",
            Error::Degenerate { .. } => "Degenerate",
            Error::InternalInconsistency { .. } => "InternalInconsistency",
            Error::InvalidArgument { .. } => "InvalidArgument",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tolerance_uses_relative_scale_with_absolute_floor() {
        let tol = Tolerance::default();
        assert!(tol.close(1.0, 1.0 + 5e-10));
        assert!(!tol.close(1.0, 1.0 + 5e-9));
        assert!(tol.close(0.0, 5e-13));
        assert!(!tol.close(0.0, 5e-12));
    }

    #[test]
    fn error_codes_are_stable() {
        let e = Error::SpaceTooLarge { size: 1 << 30, guard: 1 << 26 };
        assert_eq!(e.code(), "SpaceTooLarge");
        assert!(e.to_string().contains("1073741824"));
        assert!(e.to_string().contains("67108864"));
    }
}
