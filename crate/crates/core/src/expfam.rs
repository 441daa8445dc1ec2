//! Exponential families `p(x) = exp(⟨θ, t(x)⟩) / z(θ)` on finite site spaces.
//!
//! All normalizing computations run over the *marginal volume table*
//! `v(t) = #{x : t(x) = t}` rather than raw configurations:
//! `z(θ) = Σ_t v(t) · exp⟨θ, t⟩`, accumulated in the log domain with a
//! max-shift, so partition functions stay accurate even when `⟨θ, t⟩` spans
//! hundreds of nats.  The table also yields exact mean and covariance of the
//! statistic at any θ, which is what the Newton fitter consumes.

use std::collections::BTreeMap;

use rayon::prelude::*;

use crate::statespace::{Configuration, IndexSet, SiteSpaceFamily};
use crate::statistics::{CovariateTable, Evaluator, StatVector, StatisticSpec};
use crate::{Error, Result};

/// Numerically stable `log Σ exp(v)`; `-∞` for an empty list.
pub fn log_sum_exp(values: &[f64]) -> f64 {
    let m = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    let sum: f64 = values.iter().map(|v| (v - m).exp()).sum();
    m + sum.ln()
}

/// Size above which volume-table sweeps run on chunked worker threads.
const PAR_SWEEP_MIN: u64 = 1 << 16;

/// Marginal volume table of one statistic on one index set:
/// `v(t) = #{x : t(x) = t}` with `Σ_t v(t) = |X|`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MarginalTable {
    entries: BTreeMap<StatVector, u64>,
    cardinality: u64,
}

impl MarginalTable {
    pub fn entries(&self) -> &BTreeMap<StatVector, u64> {
        &self.entries
    }

    pub fn cardinality(&self) -> u64 {
        self.cardinality
    }

    pub fn count(&self, t: &StatVector) -> u64 {
        self.entries.get(t).copied().unwrap_or(0)
    }

    /// `log z(θ) = log Σ_t v(t) exp⟨θ, t⟩` under the statistic's scales.
    pub fn log_partition(&self, spec: &StatisticSpec, theta: &[f64]) -> f64 {
        let terms: Vec<f64> = self
            .entries
            .iter()
            .map(|(t, &v)| spec.dot(theta, t) + (v as f64).ln())
            .collect();
        log_sum_exp(&terms)
    }

    /// Exact scaled mean and covariance of the statistic at θ.
    pub fn moments(&self, spec: &StatisticSpec, theta: &[f64]) -> (Vec<f64>, Vec<Vec<f64>>) {
        let d = spec.dim();
        let log_terms: Vec<f64> = self
            .entries
            .iter()
            .map(|(t, &v)| spec.dot(theta, t) + (v as f64).ln())
            .collect();
        let lse = log_sum_exp(&log_terms);
        let mut mean = vec![0.0; d];
        let mut second = vec![vec![0.0; d]; d];
        for ((t, _), lw) in self.entries.iter().zip(log_terms.iter()) {
            let w = (lw - lse).exp();
            let s = spec.scaled(t);
            for i in 0..d {
                mean[i] += w * s[i];
                for j in 0..d {
                    second[i][j] += w * s[i] * s[j];
                }
            }
        }
        let mut cov = vec![vec![0.0; d]; d];
        for i in 0..d {
            for j in 0..d {
                cov[i][j] = second[i][j] - mean[i] * mean[j];
            }
        }
        (mean, cov)
    }
}

/// Builds the marginal volume table by one exhaustive sweep, chunked across
/// worker threads for large spaces.  The merge is a commutative sum, so the
/// result is identical however the chunks are scheduled.
pub fn marginal_volume_table(
    spec: &StatisticSpec,
    family: &SiteSpaceFamily,
    a: IndexSet,
    cov: Option<&CovariateTable>,
    guard: u64,
) -> Result<MarginalTable> {
    let ev = Evaluator::new(spec, family, a, cov)?;
    let size = family.shape(a)?.guarded_size(guard)?;
    let entries = if size < PAR_SWEEP_MIN {
        let mut entries: BTreeMap<StatVector, u64> = BTreeMap::new();
        for x in family.enumerate_range(a, 0, size)? {
            *entries.entry(ev.eval(&x)).or_insert(0) += 1;
        }
        entries
    } else {
        let chunk = 1u64 << 14;
        let ranges: Vec<(u64, u64)> =
            (0..size.div_ceil(chunk)).map(|i| (i * chunk, ((i + 1) * chunk).min(size))).collect();
        let partials: Vec<BTreeMap<StatVector, u64>> = ranges
            .into_par_iter()
            .map(|(lo, hi)| {
                let ev = Evaluator::new(spec, family, a, cov).expect("validated above");
                let mut local: BTreeMap<StatVector, u64> = BTreeMap::new();
                for x in family.enumerate_range(a, lo, hi).expect("range within size") {
                    *local.entry(ev.eval(&x)).or_insert(0) += 1;
                }
                local
            })
            .collect();
        let mut entries: BTreeMap<StatVector, u64> = BTreeMap::new();
        for partial in partials {
            for (t, c) in partial {
                *entries.entry(t).or_insert(0) += c;
            }
        }
        entries
    };
    debug_assert_eq!(entries.values().sum::<u64>(), size);
    Ok(MarginalTable { entries, cardinality: size })
}

/// Distribution of the statistic `T = t(X)` under the model: probability and
/// configuration count per attainable value.
#[derive(Clone, Debug)]
pub struct StatDistribution {
    entries: BTreeMap<StatVector, (u64, f64)>,
}

impl StatDistribution {
    pub fn entries(&self) -> &BTreeMap<StatVector, (u64, f64)> {
        &self.entries
    }

    pub fn prob(&self, t: &StatVector) -> f64 {
        self.entries.get(t).map(|&(_, p)| p).unwrap_or(0.0)
    }

    pub fn count(&self, t: &StatVector) -> u64 {
        self.entries.get(t).map(|&(c, _)| c).unwrap_or(0)
    }

    pub fn total_probability(&self) -> f64 {
        self.entries.values().map(|&(_, p)| p).sum()
    }

    /// Scaled mean `E[T · scale]`.
    pub fn mean(&self, spec: &StatisticSpec) -> Vec<f64> {
        let d = spec.dim();
        let mut mean = vec![0.0; d];
        for (t, &(_, p)) in &self.entries {
            for (i, s) in spec.scaled(t).into_iter().enumerate() {
                mean[i] += p * s;
            }
        }
        mean
    }

    /// Total-variation distance to another distribution on the same keys.
    pub fn tv_distance(&self, other: &StatDistribution) -> f64 {
        let mut keys: Vec<&StatVector> = self.entries.keys().collect();
        for k in other.entries.keys() {
            if !self.entries.contains_key(k) {
                keys.push(k);
            }
        }
        0.5 * keys.iter().map(|k| (self.prob(k) - other.prob(k)).abs()).sum::<f64>()
    }

    /// Empirical distribution of a sample of statistic values.
    pub fn empirical(samples: &[StatVector]) -> StatDistribution {
        let mut entries: BTreeMap<StatVector, (u64, f64)> = BTreeMap::new();
        for t in samples {
            entries.entry(t.clone()).or_insert((0, 0.0)).0 += 1;
        }
        let total = samples.len() as f64;
        for (c, p) in entries.values_mut() {
            *p = *c as f64 / total;
        }
        StatDistribution { entries }
    }
}

/// Conditional law of the new sites given the retained configuration, under
/// the larger model.
#[derive(Clone, Debug)]
pub struct PredictiveDistribution {
    /// `(y, increment t_B(x∘y) − t_A(x), P(y | x))` in canonical y order.
    entries: Vec<(Configuration, StatVector, f64)>,
}

impl PredictiveDistribution {
    pub fn entries(&self) -> &[(Configuration, StatVector, f64)] {
        &self.entries
    }

    /// Probability that the statistic increment equals each attainable value.
    pub fn increment_law(&self) -> BTreeMap<StatVector, f64> {
        let mut law: BTreeMap<StatVector, f64> = BTreeMap::new();
        for (_, delta, p) in &self.entries {
            *law.entry(delta.clone()).or_insert(0.0) += p;
        }
        law
    }

    pub fn total_probability(&self) -> f64 {
        self.entries.iter().map(|(_, _, p)| p).sum()
    }
}

/// A parameterized exponential family over one site-space family.
#[derive(Clone, Debug)]
pub struct ExpFamModel {
    pub family: SiteSpaceFamily,
    pub stat: StatisticSpec,
    pub theta: Vec<f64>,
    pub covariates: Option<CovariateTable>,
}

impl ExpFamModel {
    pub fn new(
        family: SiteSpaceFamily,
        stat: StatisticSpec,
        theta: Vec<f64>,
        covariates: Option<CovariateTable>,
    ) -> Result<Self> {
        if theta.len() != stat.dim() {
            return Err(Error::DimensionMismatch { expected: stat.dim(), got: theta.len() });
        }
        if theta.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteParameter);
        }
        Ok(ExpFamModel { family, stat, theta, covariates })
    }

    pub fn with_theta(&self, theta: Vec<f64>) -> Result<Self> {
        ExpFamModel::new(self.family.clone(), self.stat.clone(), theta, self.covariates.clone())
    }

    pub fn cov_ref(&self) -> Option<&CovariateTable> {
        self.covariates.as_ref()
    }

    pub fn marginal_table(&self, a: IndexSet, guard: u64) -> Result<MarginalTable> {
        marginal_volume_table(&self.stat, &self.family, a, self.cov_ref(), guard)
    }

    /// `log z_A(θ)`.
    pub fn log_partition(&self, a: IndexSet, guard: u64) -> Result<f64> {
        Ok(self.marginal_table(a, guard)?.log_partition(&self.stat, &self.theta))
    }

    /// `log p(x) = ⟨θ, t_A(x)⟩ − log z_A(θ)`.
    pub fn log_probability(&self, a: IndexSet, x: &Configuration, guard: u64) -> Result<f64> {
        let ev = Evaluator::new(&self.stat, &self.family, a, self.cov_ref())?;
        ev.check_site_count(x)?;
        let t = ev.eval(x);
        Ok(self.stat.dot(&self.theta, &t) - self.log_partition(a, guard)?)
    }

    /// Law of `T = t_A(X)`: `P(T = t) = v(t) · exp(⟨θ, t⟩) / z(θ)`.
    pub fn statistic_distribution(&self, a: IndexSet, guard: u64) -> Result<StatDistribution> {
        let table = self.marginal_table(a, guard)?;
        let log_z = table.log_partition(&self.stat, &self.theta);
        let entries = table
            .entries()
            .iter()
            .map(|(t, &v)| {
                let lp = self.stat.dot(&self.theta, t) + (v as f64).ln() - log_z;
                (t.clone(), (v, lp.exp()))
            })
            .collect();
        Ok(StatDistribution { entries })
    }

    /// Conditional law of the new sites given `X_A = x` under the `b`-level
    /// model.  Extensions with equal statistic increment get equal
    /// probability by construction.
    pub fn predictive_distribution(
        &self,
        a: IndexSet,
        b: IndexSet,
        x: &Configuration,
        guard: u64,
    ) -> Result<PredictiveDistribution> {
        let ev_a = Evaluator::new(&self.stat, &self.family, a, self.cov_ref())?;
        ev_a.check_site_count(x)?;
        let ev_b = Evaluator::new(&self.stat, &self.family, b, self.cov_ref())?;
        let t_a = ev_a.eval(x);
        let ext = self.family.extension_shape(a, b)?;
        ext.guarded_size(guard)?;
        let mut raw: Vec<(Configuration, StatVector, f64)> = Vec::new();
        for y in ext.iter_all(guard)? {
            let x_b = self.family.compose(a, b, x, &y)?;
            let t_b = ev_b.eval(&x_b);
            let delta = t_b.minus(&t_a);
            let dot = self.stat.dot(&self.theta, &delta);
            raw.push((y, delta, dot));
        }
        let lse = log_sum_exp(&raw.iter().map(|(_, _, d)| *d).collect::<Vec<f64>>());
        let entries =
            raw.into_iter().map(|(y, delta, dot)| (y, delta, (dot - lse).exp())).collect();
        Ok(PredictiveDistribution { entries })
    }

    /// Moment generating function of the statistic increment `T_B − T_A` at
    /// direction φ: `z_B(θ+φ) z_A(θ) / (z_B(θ) z_A(θ+φ))`.
    pub fn increment_mgf(&self, a: IndexSet, b: IndexSet, phi: &[f64], guard: u64) -> Result<f64> {
        if phi.len() != self.stat.dim() {
            return Err(Error::DimensionMismatch { expected: self.stat.dim(), got: phi.len() });
        }
        self.family.require_nested(a, b)?;
        let shifted: Vec<f64> = self.theta.iter().zip(phi).map(|(t, p)| t + p).collect();
        let table_a = self.marginal_table(a, guard)?;
        let table_b = self.marginal_table(b, guard)?;
        let log_mgf = table_b.log_partition(&self.stat, &shifted)
            - table_b.log_partition(&self.stat, &self.theta)
            - (table_a.log_partition(&self.stat, &shifted)
                - table_a.log_partition(&self.stat, &self.theta));
        Ok(log_mgf.exp())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::statespace::Alphabet;
    use crate::statistics::{LookupTable, StatComponent};
    use crate::DEFAULT_ENUM_GUARD;
    use approx::assert_relative_eq;

    fn idx(n: u32) -> IndexSet {
        IndexSet::new(n).unwrap()
    }

    fn edge_model(theta: f64) -> ExpFamModel {
        ExpFamModel::new(
            SiteSpaceFamily::UndirectedGraph,
            StatisticSpec::single(StatComponent::EdgeCount),
            vec![theta],
            None,
        )
        .unwrap()
    }

    fn ising_model(theta: f64) -> ExpFamModel {
        ExpFamModel::new(
            SiteSpaceFamily::SpinSequence,
            StatisticSpec::single(StatComponent::IsingNearestNeighbor),
            vec![theta],
            None,
        )
        .unwrap()
    }

    fn s31_model(theta: f64) -> ExpFamModel {
        let al_a = Alphabet::new(vec!["a".into(), "b".into(), "c".into(), "d".into()]).unwrap();
        let al_b =
            Alphabet::new(vec!["i".into(), "ii".into(), "iii".into(), "iv".into(), "v".into()])
                .unwrap();
        let family = SiteSpaceFamily::ExplicitProduct(vec![al_a, al_b]);
        let t_b_rows: [[i64; 5]; 4] =
            [[2, 2, 0, 0, 0], [0, 0, 2, 2, 2], [0, 0, -2, -2, -2], [-2, -2, 0, 0, 0]];
        let table = LookupTable::from_fn(&family, &[1, 2], 64, |a, x| {
            if a.n() == 1 {
                if x.get(0) < 2 {
                    1
                } else {
                    -1
                }
            } else {
                t_b_rows[x.get(0) as usize][x.get(1) as usize]
            }
        })
        .unwrap();
        ExpFamModel::new(
            family,
            StatisticSpec::single(StatComponent::LookupTable(table)),
            vec![theta],
            None,
        )
        .unwrap()
    }

    #[test]
    fn log_partition_at_zero_is_log_cardinality() {
        assert_relative_eq!(
            edge_model(0.0).log_partition(idx(4), DEFAULT_ENUM_GUARD).unwrap(),
            64f64.ln(),
            max_relative = 1e-12
        );
        assert_relative_eq!(
            s31_model(0.0).log_partition(idx(2), DEFAULT_ENUM_GUARD).unwrap(),
            20f64.ln(),
            max_relative = 1e-12
        );
    }

    #[test]
    fn edge_partition_matches_the_per_dyad_closed_form() {
        for theta in [-2.0, -0.5, 0.0, 0.7, 1.3] {
            for n in [3u32, 4, 5] {
                let dyads = (n * (n - 1) / 2) as f64;
                let a = edge_model(theta).log_partition(idx(n), DEFAULT_ENUM_GUARD).unwrap();
                assert_relative_eq!(
                    a,
                    dyads * (1.0 + theta.exp()).ln(),
                    max_relative = 1e-13,
                    epsilon = 1e-13
                );
            }
        }
    }

    #[test]
    fn ising_partition_matches_the_transfer_matrix_form() {
        for theta in [-1.0, 0.0, 0.5, 2.0] {
            let a = ising_model(theta).log_partition(idx(3), DEFAULT_ENUM_GUARD).unwrap();
            let expected = (2.0 * (theta.exp() + (-theta).exp()).powi(2)).ln();
            assert_relative_eq!(a, expected, max_relative = 1e-12);
        }
    }

    #[test]
    fn lookup_partition_matches_direct_summation() {
        let theta = 1.0f64;
        let z = 5.0 * (2.0 * theta).exp() + 10.0 + 5.0 * (-2.0 * theta).exp();
        let a = s31_model(theta).log_partition(idx(2), DEFAULT_ENUM_GUARD).unwrap();
        assert_relative_eq!(a, z.ln(), max_relative = 1e-12);
    }

    #[test]
    fn log_probability_of_the_complete_graph() {
        let model = edge_model(2f64.ln());
        let a = idx(3);
        let complete = model.family.configuration_from_symbols(a, &[1, 1, 1]).unwrap();
        let lp = model.log_probability(a, &complete, DEFAULT_ENUM_GUARD).unwrap();
        assert_relative_eq!(lp, 3.0 * 2f64.ln() - 3.0 * 3f64.ln(), max_relative = 1e-12);
    }

    #[test]
    fn statistic_distribution_at_zero_is_binomial_for_edges() {
        let dist = edge_model(0.0).statistic_distribution(idx(3), DEFAULT_ENUM_GUARD).unwrap();
        let expect = [(0, 1.0 / 8.0), (1, 3.0 / 8.0), (2, 3.0 / 8.0), (3, 1.0 / 8.0)];
        for (t, p) in expect {
            assert_relative_eq!(dist.prob(&StatVector::new(vec![t])), p, max_relative = 1e-12);
        }
        assert_relative_eq!(dist.total_probability(), 1.0, max_relative = 1e-12);
    }

    #[test]
    fn ising_statistic_distribution_at_zero() {
        let dist = ising_model(0.0).statistic_distribution(idx(3), DEFAULT_ENUM_GUARD).unwrap();
        assert_relative_eq!(dist.prob(&StatVector::new(vec![-2])), 0.25, max_relative = 1e-12);
        assert_relative_eq!(dist.prob(&StatVector::new(vec![0])), 0.5, max_relative = 1e-12);
        assert_relative_eq!(dist.prob(&StatVector::new(vec![2])), 0.25, max_relative = 1e-12);
        assert_eq!(dist.count(&StatVector::new(vec![0])), 4);
    }

    #[test]
    fn ising_predictive_increment_law_is_history_free() {
        for theta in [-2.0, 0.0, 1.0] {
            let model = ising_model(theta);
            let expected_up = theta.exp() / (theta.exp() + (-theta).exp());
            for n in 2..=5u32 {
                let a = idx(n);
                let b = idx(n + 1);
                for x in model.family.enumerate_configurations(a, 1 << 10).unwrap() {
                    let pred =
                        model.predictive_distribution(a, b, &x, DEFAULT_ENUM_GUARD).unwrap();
                    let law = pred.increment_law();
                    assert_relative_eq!(
                        law[&StatVector::new(vec![1])],
                        expected_up,
                        max_relative = 1e-13,
                        epsilon = 1e-13
                    );
                }
            }
        }
    }

    #[test]
    fn edge_predictive_is_uniform_at_zero_parameter() {
        let model = edge_model(0.0);
        let x = model.family.configuration_from_symbols(idx(3), &[1, 0, 1]).unwrap();
        let pred = model.predictive_distribution(idx(3), idx(4), &x, DEFAULT_ENUM_GUARD).unwrap();
        assert_eq!(pred.entries().len(), 8);
        for (_, _, p) in pred.entries() {
            assert_relative_eq!(*p, 1.0 / 8.0, max_relative = 1e-12);
        }
    }

    #[test]
    fn triangle_predictive_depends_on_the_retained_graph() {
        let model = ExpFamModel::new(
            SiteSpaceFamily::UndirectedGraph,
            StatisticSpec::single(StatComponent::TriangleCount),
            vec![0.5],
            None,
        )
        .unwrap();
        let a = idx(3);
        let b = idx(4);
        let empty = model.family.configuration_from_symbols(a, &[0, 0, 0]).unwrap();
        let complete = model.family.configuration_from_symbols(a, &[1, 1, 1]).unwrap();
        let p_empty = model.predictive_distribution(a, b, &empty, DEFAULT_ENUM_GUARD).unwrap();
        let p_complete =
            model.predictive_distribution(a, b, &complete, DEFAULT_ENUM_GUARD).unwrap();
        let law_e = p_empty.increment_law();
        let law_c = p_complete.increment_law();
        let zero = StatVector::new(vec![0]);
        assert!((law_e[&zero] - law_c[&zero]).abs() > 0.1);
    }

    #[test]
    fn increment_mgf_is_one_at_zero_direction() {
        let model = edge_model(0.8);
        let m = model.increment_mgf(idx(3), idx(5), &[0.0], DEFAULT_ENUM_GUARD).unwrap();
        assert_relative_eq!(m, 1.0, max_relative = 1e-12);
    }

    #[test]
    fn edge_increment_mgf_matches_the_closed_form() {
        let (theta, phi) = (0.4, -0.9);
        let model = edge_model(theta);
        let m = model.increment_mgf(idx(3), idx(4), &[phi], DEFAULT_ENUM_GUARD).unwrap();
        let expected = ((1.0 + (theta + phi).exp()) / (1.0 + theta.exp())).powi(3);
        assert_relative_eq!(m, expected, max_relative = 1e-12);
    }

    #[test]
    fn ising_increment_mgf_matches_the_partition_ratio() {
        let (theta, phi) = (0.7, 0.3);
        let model = ising_model(theta);
        let m = model.increment_mgf(idx(4), idx(5), &[phi], DEFAULT_ENUM_GUARD).unwrap();
        let expected = ((theta + phi).exp() + (-(theta + phi)).exp())
            / (theta.exp() + (-theta).exp());
        assert_relative_eq!(m, expected, max_relative = 1e-12);
    }

    #[test]
    fn increment_mgf_matches_the_predictive_expectation_for_projective_models() {
        let model = ising_model(0.6);
        let (a, b) = (idx(4), idx(6));
        let phi = [0.25];
        let mgf = model.increment_mgf(a, b, &phi, DEFAULT_ENUM_GUARD).unwrap();
        let x = model.family.configuration_from_symbols(a, &[0, 1, 0, 0]).unwrap();
        let pred = model.predictive_distribution(a, b, &x, DEFAULT_ENUM_GUARD).unwrap();
        let empirical: f64 = pred
            .entries()
            .iter()
            .map(|(_, delta, p)| p * model.stat.dot(&phi, delta).exp())
            .sum();
        assert_relative_eq!(mgf, empirical, max_relative = 1e-10);
    }

    #[test]
    fn moments_match_finite_differences_of_the_log_partition() {
        let model = edge_model(0.3);
        let table = model.marginal_table(idx(4), DEFAULT_ENUM_GUARD).unwrap();
        let (mean, cov) = table.moments(&model.stat, &model.theta);
        let h = 1e-5;
        let up = table.log_partition(&model.stat, &[0.3 + h]);
        let down = table.log_partition(&model.stat, &[0.3 - h]);
        assert_relative_eq!(mean[0], (up - down) / (2.0 * h), max_relative = 1e-8);
        let mid = table.log_partition(&model.stat, &[0.3]);
        assert_relative_eq!(cov[0][0], (up - 2.0 * mid + down) / (h * h), max_relative = 1e-5);
    }

    #[test]
    fn theta_must_match_the_statistic_dimension() {
        let err = ExpFamModel::new(
            SiteSpaceFamily::UndirectedGraph,
            StatisticSpec::single(StatComponent::EdgeCount),
            vec![0.0, 1.0],
            None,
        );
        assert!(matches!(err, Err(Error::DimensionMismatch { expected: 1, got: 2 })));
    }
}
