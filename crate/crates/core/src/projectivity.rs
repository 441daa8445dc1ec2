//! Volume tables and the consistency-under-extension checks.
//!
//! For nested index sets `A ⊆ B`, three exact integer tables summarize how a
//! statistic grows:
//!
//! * marginal `v(t) = #{x ∈ X_A : t_A(x) = t}`;
//! * joint `v(t, δ) = #{(x, y) : t_A(x) = t, t_B(x∘y) − t_A(x) = δ}`;
//! * conditional `v(δ | x) = #{y : t_B(x∘y) − t_A(x) = δ}`, one row per `x`.
//!
//! The model at `A` is the marginal of the model at `B` for every θ exactly
//! when the increments are *separable*: every conditional row is the same,
//! in support and in counts.  [`check_separable_increments`] decides that by
//! integer comparison, with no tolerance and no θ grid.
//!
//! [`check_projective_direct`] tests the defining property itself on a θ
//! grid, by re-enumerating `X_B` and summing each fiber; it deliberately
//! shares nothing with the volume tables, so the two routes to the same
//! verdict can disagree only if one of them is wrong.  Two weaker companion
//! checks quantify implied facts that are worth falsifying separately: the
//! joint table factorizes exactly (`v(t,δ) · |X_B| = rowsum(t) · colsum(δ)`
//! in `u128`), and the conditional increment law does not depend on `x`.  A
//! fifth check asserts that the predictive law of the added sites prices
//! equal increments equally across histories.
//!
//! [`projectivity_report`] runs all five, then cross-checks the verdict
//! pattern against the implications that must hold between them; a violation
//! is a bug in this crate and surfaces as `InternalInconsistency`, never as
//! a quietly odd report.

use std::collections::{BTreeMap, HashMap};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use smallvec::SmallVec;

use crate::expfam::log_sum_exp;
use crate::statespace::{Configuration, IndexSet, SiteSpaceFamily};
use crate::statistics::{CovariateTable, Evaluator, StatVector, StatisticSpec};
use crate::{Error, Result, Tolerance};

/// Seed for the randomized directions appended to multivariate θ grids.
const GRID_DIRECTION_SEED: u64 = 0x70726f_6a636b31;

/// Sweeps over spaces at least this large run as parallel rank chunks.
const PAR_BUILD_MIN: u64 = 1 << 16;

/// Target number of superset configurations per parallel task.
const CHUNK_TARGET: u64 = 1 << 14;

type Row = SmallVec<[(u32, u64); 4]>;

/// Exact marginal, joint, and conditional volume tables for one
/// `(statistic, family, A ⊆ B)` quadruple.
#[derive(Debug)]
pub struct VolumeTables {
    family: SiteSpaceFamily,
    a: IndexSet,
    b: IndexSet,
    scales: Vec<f64>,
    marginal: BTreeMap<StatVector, u64>,
    joint: BTreeMap<(StatVector, StatVector), u64>,
    /// Distinct statistic values on `X_A`, in deterministic discovery order.
    stat_values: Vec<StatVector>,
    /// Distinct increments, in deterministic discovery order.
    deltas: Vec<StatVector>,
    /// `stat_of[rank(x)]` indexes into `stat_values`.
    stat_of: Vec<u32>,
    /// `conditional[rank(x)]`: (delta index, count) sorted by delta index.
    conditional: Vec<Row>,
    xa_card: u64,
    xnew_card: u64,
}

impl VolumeTables {
    /// One exhaustive sweep over `X_B`, organized as `X_A × extensions` and
    /// chunked over `X_A` for large spaces.  Sum rules are re-checked before
    /// returning.
    pub fn build(
        spec: &StatisticSpec,
        family: &SiteSpaceFamily,
        a: IndexSet,
        b: IndexSet,
        cov: Option<&CovariateTable>,
        guard: u64,
    ) -> Result<VolumeTables> {
        family.require_nested(a, b)?;
        family.shape(b)?.guarded_size(guard)?;
        let xa_card = family.shape(a)?.size() as u64;
        let ext = family.extension_shape(a, b)?;
        let xnew_card = ext.size() as u64;

        // Validate the pairing once up front so chunk workers cannot fail.
        Evaluator::new(spec, family, a, cov)?;
        Evaluator::new(spec, family, b, cov)?;

        let sweep = |lo: u64, hi: u64| -> ChunkTables {
            let ev_a = Evaluator::new(spec, family, a, cov).expect("validated");
            let ev_b = Evaluator::new(spec, family, b, cov).expect("validated");
            let mut out = ChunkTables::default();
            for x in family.enumerate_range(a, lo, hi).expect("range in bounds") {
                let t = ev_a.eval(&x);
                let mut row: SmallVec<[(StatVector, u64); 4]> = SmallVec::new();
                for y in ext.iter_range(0, xnew_card).expect("range in bounds") {
                    let x_b = family.compose(a, b, &x, &y).expect("shapes agree");
                    let delta = ev_b.eval(&x_b).minus(&t);
                    match row.iter_mut().find(|(d, _)| *d == delta) {
                        Some((_, c)) => *c += 1,
                        None => row.push((delta, 1)),
                    }
                }
                for (delta, c) in &row {
                    *out.joint.entry((t.clone(), delta.clone())).or_insert(0) += c;
                }
                *out.marginal.entry(t.clone()).or_insert(0) += 1;
                out.rows.push((t, row));
            }
            out
        };

        let chunks: Vec<ChunkTables> = if xa_card.saturating_mul(xnew_card) < PAR_BUILD_MIN {
            vec![sweep(0, xa_card)]
        } else {
            chunk_ranges(xa_card, xnew_card)
                .into_par_iter()
                .map(|(lo, hi)| sweep(lo, hi))
                .collect()
        };

        // Deterministic merge: chunks arrive in rank order, and both value
        // pools are interned in first-encounter order.
        let mut marginal: BTreeMap<StatVector, u64> = BTreeMap::new();
        let mut joint: BTreeMap<(StatVector, StatVector), u64> = BTreeMap::new();
        let mut stat_values: Vec<StatVector> = Vec::new();
        let mut stat_index: HashMap<StatVector, u32> = HashMap::new();
        let mut deltas: Vec<StatVector> = Vec::new();
        let mut delta_index: HashMap<StatVector, u32> = HashMap::new();
        let mut stat_of: Vec<u32> = Vec::with_capacity(xa_card as usize);
        let mut conditional: Vec<Row> = Vec::with_capacity(xa_card as usize);
        for chunk in chunks {
            for (t, c) in chunk.marginal {
                *marginal.entry(t).or_insert(0) += c;
            }
            for (key, c) in chunk.joint {
                *joint.entry(key).or_insert(0) += c;
            }
            for (t, raw) in chunk.rows {
                stat_of.push(*stat_index.entry(t.clone()).or_insert_with(|| {
                    stat_values.push(t);
                    (stat_values.len() - 1) as u32
                }));
                let mut row: Row = SmallVec::with_capacity(raw.len());
                for (delta, c) in raw {
                    let idx = *delta_index.entry(delta.clone()).or_insert_with(|| {
                        deltas.push(delta);
                        (deltas.len() - 1) as u32
                    });
                    row.push((idx, c));
                }
                row.sort_unstable_by_key(|&(idx, _)| idx);
                conditional.push(row);
            }
        }

        let tables = VolumeTables {
            family: family.clone(),
            a,
            b,
            scales: spec.scales(),
            marginal,
            joint,
            stat_values,
            deltas,
            stat_of,
            conditional,
            xa_card,
            xnew_card,
        };
        tables.assert_sum_rules()?;
        Ok(tables)
    }

    fn assert_sum_rules(&self) -> Result<()> {
        let fail = |detail: String| Err(Error::InternalInconsistency { detail });
        if self.marginal.values().sum::<u64>() != self.xa_card {
            return fail("marginal volume table does not sum to |X_A|".into());
        }
        let joint_total: u128 = self.joint.values().map(|&c| c as u128).sum();
        if joint_total != self.xa_card as u128 * self.xnew_card as u128 {
            return fail("joint volume table does not sum to |X_B|".into());
        }
        for (rank, row) in self.conditional.iter().enumerate() {
            if row.iter().map(|&(_, c)| c).sum::<u64>() != self.xnew_card {
                return fail(format!("conditional row {rank} does not sum to |X_B∖A|"));
            }
        }
        let mut row_totals: BTreeMap<&StatVector, u128> = BTreeMap::new();
        for ((t, _), &c) in &self.joint {
            *row_totals.entry(t).or_insert(0) += c as u128;
        }
        for (t, &v) in &self.marginal {
            if row_totals.get(t).copied().unwrap_or(0) != v as u128 * self.xnew_card as u128 {
                return fail(format!("joint row for t = {t} does not match v(t) · |X_B∖A|"));
            }
        }
        Ok(())
    }

    pub fn index_sets(&self) -> (IndexSet, IndexSet) {
        (self.a, self.b)
    }

    pub fn xa_cardinality(&self) -> u64 {
        self.xa_card
    }

    pub fn xnew_cardinality(&self) -> u64 {
        self.xnew_card
    }

    pub fn marginal(&self) -> &BTreeMap<StatVector, u64> {
        &self.marginal
    }

    pub fn joint(&self) -> &BTreeMap<(StatVector, StatVector), u64> {
        &self.joint
    }

    pub fn marginal_count(&self, t: &StatVector) -> u64 {
        self.marginal.get(t).copied().unwrap_or(0)
    }

    pub fn joint_count(&self, t: &StatVector, delta: &StatVector) -> u64 {
        self.joint.get(&(t.clone(), delta.clone())).copied().unwrap_or(0)
    }

    /// Distinct increments over all of `X_A × X_B∖A`.
    pub fn increments(&self) -> &[StatVector] {
        &self.deltas
    }

    /// Statistic value of the retained configuration with this rank.
    pub fn statistic_at(&self, rank: u64) -> &StatVector {
        &self.stat_values[self.stat_of[rank as usize] as usize]
    }

    /// `v(δ | x)` for an explicit retained configuration.
    pub fn conditional_count(&self, x: &Configuration, delta: &StatVector) -> Result<u64> {
        let rank = self.family.rank(self.a, x)?;
        Ok(self
            .deltas
            .iter()
            .position(|d| d == delta)
            .and_then(|idx| {
                self.conditional[rank as usize]
                    .iter()
                    .find(|&&(i, _)| i as usize == idx)
                    .map(|&(_, c)| c)
            })
            .unwrap_or(0))
    }

    /// The conditional row for one rank, as (increment, count) pairs.
    pub fn conditional_row(&self, rank: u64) -> impl Iterator<Item = (&StatVector, u64)> {
        self.conditional[rank as usize]
            .iter()
            .map(|&(idx, c)| (&self.deltas[idx as usize], c))
    }

    /// The statistic marginal on `X_B`, derived exactly from the joint table.
    pub fn marginal_at_b(&self) -> BTreeMap<StatVector, u64> {
        let mut out: BTreeMap<StatVector, u64> = BTreeMap::new();
        for ((t, delta), &c) in &self.joint {
            *out.entry(t.plus(delta)).or_insert(0) += c;
        }
        out
    }

    fn config_ref(&self, rank: u64) -> ConfigRef {
        let x = self.family.decode(self.a, rank).expect("rank in range");
        ConfigRef { rank, display: self.family.display(self.a, &x) }
    }

    fn dot(&self, theta: &[f64], v: &StatVector) -> f64 {
        theta
            .iter()
            .zip(v.as_slice().iter().zip(self.scales.iter()))
            .map(|(&th, (&x, &s))| th * x as f64 * s)
            .sum()
    }

    /// Content fingerprint of the three tables (FNV-1a over a canonical byte
    /// stream), stable across runs and platforms.
    pub fn checksum(&self) -> String {
        let mut h = Fnv::new();
        h.u64(self.xa_card);
        h.u64(self.xnew_card);
        for (t, &c) in &self.marginal {
            h.stat(t);
            h.u64(c);
        }
        for ((t, d), &c) in &self.joint {
            h.stat(t);
            h.stat(d);
            h.u64(c);
        }
        for row in &self.conditional {
            for &(idx, c) in row {
                h.stat(&self.deltas[idx as usize]);
                h.u64(c);
            }
            h.u64(u64::MAX);
        }
        format!("{:016x}", h.finish())
    }
}

type BaseRow = SmallVec<[(StatVector, u64); 4]>;

#[derive(Default)]
struct ChunkTables {
    marginal: BTreeMap<StatVector, u64>,
    joint: BTreeMap<(StatVector, StatVector), u64>,
    rows: Vec<(StatVector, BaseRow)>,
}

fn chunk_ranges(xa_card: u64, xnew_card: u64) -> Vec<(u64, u64)> {
    let per_chunk = (CHUNK_TARGET / xnew_card.max(1)).clamp(1, xa_card);
    (0..xa_card.div_ceil(per_chunk))
        .map(|i| (i * per_chunk, ((i + 1) * per_chunk).min(xa_card)))
        .collect()
}

/// FNV-1a, 64-bit.
struct Fnv(u64);

impl Fnv {
    fn new() -> Self {
        Fnv(0xcbf29ce484222325)
    }

    fn u64(&mut self, v: u64) {
        for b in v.to_le_bytes() {
            self.0 ^= b as u64;
            self.0 = self.0.wrapping_mul(0x100000001b3);
        }
    }

    fn stat(&mut self, v: &StatVector) {
        for &x in v.as_slice() {
            self.u64(x as u64);
        }
        self.u64(u64::MAX - 1);
    }

    fn finish(&self) -> u64 {
        self.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Pass,
    Fail,
}

impl Verdict {
    pub fn passed(&self) -> bool {
        matches!(self, Verdict::Pass)
    }
}

/// Retained configuration referenced by a witness.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConfigRef {
    pub rank: u64,
    pub display: String,
}

/// Minimal failing datum of one check, sufficient to recompute the violation
/// from scratch.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Witness {
    SeparableIncrements {
        x: ConfigRef,
        x_prime: ConfigRef,
        delta: Vec<i64>,
        count_x: u64,
        count_x_prime: u64,
    },
    JointFactorization {
        t: Vec<i64>,
        delta: Vec<i64>,
        joint_count: u64,
        row_total: u128,
        column_total: u128,
        lhs: u128,
        rhs: u128,
    },
    DirectMarginalization {
        theta: Vec<f64>,
        x: ConfigRef,
        retained_probability: f64,
        marginalized_probability: f64,
        discrepancy: f64,
        allowed: f64,
    },
    IncrementIndependence {
        theta: Vec<f64>,
        x: ConfigRef,
        x_prime: ConfigRef,
        delta: Vec<i64>,
        probability_x: f64,
        probability_x_prime: f64,
    },
    PredictiveSufficiency {
        theta: Vec<f64>,
        x: ConfigRef,
        x_prime: ConfigRef,
        delta: Vec<i64>,
        probability_x: f64,
        probability_x_prime: f64,
    },
}

/// Outcome of one check.
#[derive(Clone, Debug, Serialize)]
pub struct CheckResult {
    pub criterion: Criterion,
    pub verdict: Verdict,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub witness: Option<Witness>,
}

impl CheckResult {
    fn pass(criterion: Criterion) -> Self {
        CheckResult { criterion, verdict: Verdict::Pass, witness: None }
    }

    fn fail(criterion: Criterion, witness: Witness) -> Self {
        CheckResult { criterion, verdict: Verdict::Fail, witness: Some(witness) }
    }

    pub fn passed(&self) -> bool {
        self.verdict.passed()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Criterion {
    SeparableIncrements,
    JointFactorization,
    DirectMarginalization,
    IncrementIndependence,
    PredictiveSufficiency,
}

impl Criterion {
    pub fn name(&self) -> &'static str {
        match self {
            Criterion::SeparableIncrements => "separable-increments",
            Criterion::JointFactorization => "joint-factorization",
            Criterion::DirectMarginalization => "direct-marginalization",
            Criterion::IncrementIndependence => "increment-independence",
            Criterion::PredictiveSufficiency => "predictive-sufficiency",
        }
    }
}

/// Exact check: every conditional row equals the first one, in support and in
/// counts.  This is the two-sided certificate; it passes exactly when the
/// family is consistent under extension for all θ simultaneously.
pub fn check_separable_increments(tables: &VolumeTables) -> CheckResult {
    let reference = &tables.conditional[0];
    for (rank, row) in tables.conditional.iter().enumerate().skip(1) {
        if row == reference {
            continue;
        }
        // First divergent increment, merging the two index-sorted rows.
        let (mut i, mut j) = (0usize, 0usize);
        let (idx, count_ref, count_row) = loop {
            match (reference.get(i), row.get(j)) {
                (Some(&(ri, rc)), Some(&(si, sc))) => {
                    if ri == si {
                        if rc != sc {
                            break (ri, rc, sc);
                        }
                        i += 1;
                        j += 1;
                    } else if ri < si {
                        break (ri, rc, 0);
                    } else {
                        break (si, 0, sc);
                    }
                }
                (Some(&(ri, rc)), None) => break (ri, rc, 0),
                (None, Some(&(si, sc))) => break (si, 0, sc),
                (None, None) => unreachable!("rows differ but merge found no divergence"),
            }
        };
        return CheckResult::fail(
            Criterion::SeparableIncrements,
            Witness::SeparableIncrements {
                x: tables.config_ref(0),
                x_prime: tables.config_ref(rank as u64),
                delta: tables.deltas[idx as usize].as_slice().to_vec(),
                count_x: count_ref,
                count_x_prime: count_row,
            },
        );
    }
    CheckResult::pass(Criterion::SeparableIncrements)
}

/// Exact check: the joint table is the product of its margins,
/// `v(t, δ) · |X_B| = rowsum(t) · colsum(δ)`, cross-multiplied in `u128` so
/// no division ever happens.
pub fn check_joint_factorization(tables: &VolumeTables) -> CheckResult {
    let n: u128 = tables.xa_card as u128 * tables.xnew_card as u128;
    let mut col_totals: HashMap<&StatVector, u128> = HashMap::new();
    for ((_, delta), &c) in &tables.joint {
        *col_totals.entry(delta).or_insert(0) += c as u128;
    }
    for (t, &v) in &tables.marginal {
        let row_total = v as u128 * tables.xnew_card as u128;
        for delta in &tables.deltas {
            let joint_count = tables.joint_count(t, delta);
            let column_total = col_totals.get(delta).copied().unwrap_or(0);
            let lhs = joint_count as u128 * n;
            let rhs = row_total * column_total;
            if lhs != rhs {
                return CheckResult::fail(
                    Criterion::JointFactorization,
                    Witness::JointFactorization {
                        t: t.as_slice().to_vec(),
                        delta: delta.as_slice().to_vec(),
                        joint_count,
                        row_total,
                        column_total,
                        lhs,
                        rhs,
                    },
                );
            }
        }
    }
    CheckResult::pass(Criterion::JointFactorization)
}

/// Grid check: the conditional increment law
/// `P(δ | x) ∝ v(δ | x) · exp⟨θ, δ⟩` is the same for every retained `x`.
pub fn check_increment_independence_of_x(
    tables: &VolumeTables,
    theta_grid: &[Vec<f64>],
    tol: Tolerance,
) -> CheckResult {
    for theta in theta_grid {
        let law = |row: &Row| -> Vec<(u32, f64)> {
            let logs: Vec<f64> = row
                .iter()
                .map(|&(idx, c)| tables.dot(theta, &tables.deltas[idx as usize]) + (c as f64).ln())
                .collect();
            let lse = log_sum_exp(&logs);
            row.iter().zip(logs).map(|(&(idx, _), l)| (idx, (l - lse).exp())).collect()
        };
        let prob_at = |probs: &[(u32, f64)], idx: u32| -> f64 {
            probs.iter().find(|&&(i, _)| i == idx).map(|&(_, p)| p).unwrap_or(0.0)
        };
        let reference = law(&tables.conditional[0]);
        for (rank, row) in tables.conditional.iter().enumerate().skip(1) {
            let probs = law(row);
            for idx in 0..tables.deltas.len() as u32 {
                let (p0, p1) = (prob_at(&reference, idx), prob_at(&probs, idx));
                if !tol.close(p0, p1) {
                    return CheckResult::fail(
                        Criterion::IncrementIndependence,
                        Witness::IncrementIndependence {
                            theta: theta.clone(),
                            x: tables.config_ref(0),
                            x_prime: tables.config_ref(rank as u64),
                            delta: tables.deltas[idx as usize].as_slice().to_vec(),
                            probability_x: p0,
                            probability_x_prime: p1,
                        },
                    );
                }
            }
        }
    }
    CheckResult::pass(Criterion::IncrementIndependence)
}

/// Grid check of the defining property itself: marginalize the `B`-level
/// model onto `X_A` by explicit fiber summation and compare with the
/// `A`-level model, one retained configuration at a time.
///
/// This path re-enumerates everything and never reads the volume tables, so
/// it can disagree with [`check_separable_increments`] only if one of the
/// two implementations is wrong.  [`projectivity_report`] turns any such
/// disagreement into an error.
#[allow(clippy::too_many_arguments)]
pub fn check_projective_direct(
    spec: &StatisticSpec,
    family: &SiteSpaceFamily,
    a: IndexSet,
    b: IndexSet,
    cov: Option<&CovariateTable>,
    theta_grid: &[Vec<f64>],
    tol: Tolerance,
    guard: u64,
) -> Result<CheckResult> {
    family.require_nested(a, b)?;
    family.shape(b)?.guarded_size(guard)?;
    let xa_card = family.shape(a)?.size() as u64;
    let ext = family.extension_shape(a, b)?;
    let xnew_card = ext.size() as u64;
    Evaluator::new(spec, family, a, cov)?;
    Evaluator::new(spec, family, b, cov)?;

    let ranges = chunk_ranges(xa_card, xnew_card);
    let parallel = xa_card.saturating_mul(xnew_card) >= PAR_BUILD_MIN;

    for theta in theta_grid {
        // Pass 1: log partition functions at both levels, merged from
        // per-chunk log-sum-exp values.
        let partials = |lo: u64, hi: u64| -> (f64, f64) {
            let ev_a = Evaluator::new(spec, family, a, cov).expect("validated");
            let ev_b = Evaluator::new(spec, family, b, cov).expect("validated");
            let mut terms_a = Vec::with_capacity((hi - lo) as usize);
            let mut terms_b = Vec::new();
            for x in family.enumerate_range(a, lo, hi).expect("range in bounds") {
                terms_a.push(spec.dot(theta, &ev_a.eval(&x)));
                for y in ext.iter_range(0, xnew_card).expect("range in bounds") {
                    let x_b = family.compose(a, b, &x, &y).expect("shapes agree");
                    terms_b.push(spec.dot(theta, &ev_b.eval(&x_b)));
                }
            }
            (log_sum_exp(&terms_a), log_sum_exp(&terms_b))
        };
        let chunk_lses: Vec<(f64, f64)> = if parallel {
            ranges.par_iter().map(|&(lo, hi)| partials(lo, hi)).collect()
        } else {
            ranges.iter().map(|&(lo, hi)| partials(lo, hi)).collect()
        };
        let log_z_a = log_sum_exp(&chunk_lses.iter().map(|&(la, _)| la).collect::<Vec<_>>());
        let log_z_b = log_sum_exp(&chunk_lses.iter().map(|&(_, lb)| lb).collect::<Vec<_>>());

        // Pass 2: compare per retained configuration, reporting the lowest
        // failing rank.
        let compare = |lo: u64, hi: u64| -> Option<(u64, f64, f64)> {
            let ev_a = Evaluator::new(spec, family, a, cov).expect("validated");
            let ev_b = Evaluator::new(spec, family, b, cov).expect("validated");
            for (offset, x) in
                family.enumerate_range(a, lo, hi).expect("range in bounds").enumerate()
            {
                let p_a = (spec.dot(theta, &ev_a.eval(&x)) - log_z_a).exp();
                let mut fiber = Vec::with_capacity(xnew_card as usize);
                for y in ext.iter_range(0, xnew_card).expect("range in bounds") {
                    let x_b = family.compose(a, b, &x, &y).expect("shapes agree");
                    fiber.push(spec.dot(theta, &ev_b.eval(&x_b)));
                }
                let p_marg = (log_sum_exp(&fiber) - log_z_b).exp();
                if !tol.close(p_a, p_marg) {
                    return Some((lo + offset as u64, p_a, p_marg));
                }
            }
            None
        };
        let first = if parallel {
            ranges
                .par_iter()
                .filter_map(|&(lo, hi)| compare(lo, hi))
                .min_by_key(|&(rank, _, _)| rank)
        } else {
            ranges.iter().find_map(|&(lo, hi)| compare(lo, hi))
        };
        if let Some((rank, p_a, p_marg)) = first {
            let x = family.decode(a, rank)?;
            return Ok(CheckResult::fail(
                Criterion::DirectMarginalization,
                Witness::DirectMarginalization {
                    theta: theta.clone(),
                    x: ConfigRef { rank, display: family.display(a, &x) },
                    retained_probability: p_a,
                    marginalized_probability: p_marg,
                    discrepancy: (p_a - p_marg).abs(),
                    allowed: tol.margin(p_a, p_marg),
                },
            ));
        }
    }
    Ok(CheckResult::pass(Criterion::DirectMarginalization))
}

/// Grid check: the predictive law of the added sites prices equal increments
/// equally across histories.  For each θ, the single-extension probability
/// `exp⟨θ, δ⟩ / Σ_δ' v(δ'|x) exp⟨θ, δ'⟩` of an increment δ must not depend
/// on which `x` carries it.
pub fn check_predictive_sufficiency(
    tables: &VolumeTables,
    theta_grid: &[Vec<f64>],
    tol: Tolerance,
) -> CheckResult {
    for theta in theta_grid {
        let mut first_seen: Vec<Option<(u64, f64)>> = vec![None; tables.deltas.len()];
        for (rank, row) in tables.conditional.iter().enumerate() {
            let terms: Vec<f64> = row
                .iter()
                .map(|&(idx, c)| tables.dot(theta, &tables.deltas[idx as usize]) + (c as f64).ln())
                .collect();
            let log_z = log_sum_exp(&terms);
            for &(idx, _) in row {
                let p = (tables.dot(theta, &tables.deltas[idx as usize]) - log_z).exp();
                match first_seen[idx as usize] {
                    None => first_seen[idx as usize] = Some((rank as u64, p)),
                    Some((first_rank, p0)) => {
                        if !tol.close(p0, p) {
                            return CheckResult::fail(
                                Criterion::PredictiveSufficiency,
                                Witness::PredictiveSufficiency {
                                    theta: theta.clone(),
                                    x: tables.config_ref(first_rank),
                                    x_prime: tables.config_ref(rank as u64),
                                    delta: tables.deltas[idx as usize].as_slice().to_vec(),
                                    probability_x: p0,
                                    probability_x_prime: p,
                                },
                            );
                        }
                    }
                }
            }
        }
    }
    CheckResult::pass(Criterion::PredictiveSufficiency)
}

/// Default θ grid for a `dim`-dimensional statistic.
///
/// One-dimensional: seven fixed points spanning `[-2, 2]`.  Higher
/// dimensions: the origin, all `±e_j`, the remaining `{-1, 0, 1}^dim`
/// corners up to 64 points total, plus eight seeded pseudo-random directions
/// of length 3/2.  Deterministic for a given `dim`.
pub fn default_theta_grid(dim: usize) -> Vec<Vec<f64>> {
    if dim == 1 {
        return [-2.0, -1.0, -0.5, 0.0, 0.5, 1.0, 2.0].iter().map(|&v| vec![v]).collect();
    }
    let mut grid: Vec<Vec<f64>> = Vec::new();
    grid.push(vec![0.0; dim]);
    for j in 0..dim {
        for sign in [1.0, -1.0] {
            let mut v = vec![0.0; dim];
            v[j] = sign;
            grid.push(v);
        }
    }
    let corners = 3u128.checked_pow(dim as u32).unwrap_or(u128::MAX);
    let mut code = 0u128;
    while code < corners && grid.len() < 64 {
        let mut v = Vec::with_capacity(dim);
        let mut rest = code;
        for _ in 0..dim {
            v.push((rest % 3) as f64 - 1.0);
            rest /= 3;
        }
        code += 1;
        if !grid.contains(&v) {
            grid.push(v);
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(GRID_DIRECTION_SEED ^ dim as u64);
    let mut added = 0;
    while added < 8 {
        let v: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm < 1e-3 {
            continue;
        }
        grid.push(v.iter().map(|x| 1.5 * x / norm).collect());
        added += 1;
    }
    grid
}

/// Full report: the five checks plus the cross-check that their verdicts
/// respect the implications between them.
#[derive(Clone, Debug, Serialize)]
pub struct ProjectivityReport {
    pub family: String,
    pub sub: u32,
    pub sup: u32,
    pub statistic: Vec<String>,
    pub dimension: usize,
    pub retained_cardinality: u64,
    pub extended_cardinality: u64,
    pub distinct_statistics: usize,
    pub distinct_increments: usize,
    pub theta_grid: Vec<Vec<f64>>,
    pub tolerance: Tolerance,
    pub checks: Vec<CheckResult>,
    pub projective: bool,
    pub all_pass: bool,
    pub table_checksum: String,
}

/// Options for [`projectivity_report`].
#[derive(Clone, Debug)]
pub struct ReportOptions {
    /// Explicit θ grid; `None` selects [`default_theta_grid`].
    pub theta_grid: Option<Vec<Vec<f64>>>,
    pub tolerance: Tolerance,
    pub guard: u64,
}

impl Default for ReportOptions {
    fn default() -> Self {
        ReportOptions {
            theta_grid: None,
            tolerance: Tolerance::default(),
            guard: crate::DEFAULT_ENUM_GUARD,
        }
    }
}

pub fn projectivity_report(
    spec: &StatisticSpec,
    family: &SiteSpaceFamily,
    a: IndexSet,
    b: IndexSet,
    cov: Option<&CovariateTable>,
    opts: &ReportOptions,
) -> Result<ProjectivityReport> {
    let grid = match &opts.theta_grid {
        Some(g) => {
            for theta in g {
                if theta.len() != spec.dim() {
                    return Err(Error::DimensionMismatch {
                        expected: spec.dim(),
                        got: theta.len(),
                    });
                }
                if theta.iter().any(|v| !v.is_finite()) {
                    return Err(Error::NonFiniteParameter);
                }
            }
            g.clone()
        }
        None => default_theta_grid(spec.dim()),
    };
    let tol = opts.tolerance;

    let tables = VolumeTables::build(spec, family, a, b, cov, opts.guard)?;
    let checks = vec![
        check_separable_increments(&tables),
        check_joint_factorization(&tables),
        check_projective_direct(spec, family, a, b, cov, &grid, tol, opts.guard)?,
        check_increment_independence_of_x(&tables, &grid, tol),
        check_predictive_sufficiency(&tables, &grid, tol),
    ];
    assert_implications(&checks)?;

    let projective = checks[0].passed();
    let all_pass = checks.iter().all(CheckResult::passed);
    Ok(ProjectivityReport {
        family: family.kind_name().to_string(),
        sub: a.n(),
        sup: b.n(),
        statistic: spec.components().iter().map(|c| c.component.name().to_string()).collect(),
        dimension: spec.dim(),
        retained_cardinality: tables.xa_cardinality(),
        extended_cardinality: tables.xa_cardinality() * tables.xnew_cardinality(),
        distinct_statistics: tables.marginal().len(),
        distinct_increments: tables.increments().len(),
        theta_grid: grid,
        tolerance: tol,
        checks,
        projective,
        all_pass,
        table_checksum: tables.checksum(),
    })
}

/// The verdict pattern must respect the known implications.  The exact check
/// and the grid re-derivation of the same property must agree; the exact
/// check implies everything else; the conditional law cannot be independent
/// of `x` while the joint table fails to factorize.
fn assert_implications(checks: &[CheckResult]) -> Result<()> {
    let get = |c: Criterion| {
        checks
            .iter()
            .find(|r| r.criterion == c)
            .map(CheckResult::passed)
            .expect("all criteria present")
    };
    let separable = get(Criterion::SeparableIncrements);
    let joint = get(Criterion::JointFactorization);
    let direct = get(Criterion::DirectMarginalization);
    let incr = get(Criterion::IncrementIndependence);
    let predictive = get(Criterion::PredictiveSufficiency);

    let mut violations: Vec<&str> = Vec::new();
    if separable != direct {
        violations.push("exact separability and direct marginalization disagree");
    }
    if separable && !joint {
        violations.push("separable increments but joint table does not factorize");
    }
    if direct && !incr {
        violations.push("marginalization consistent but increment law depends on x");
    }
    if incr && !joint {
        violations.push("increment law independent of x but joint table does not factorize");
    }
    if direct && !predictive {
        violations.push("marginalization consistent but predictive law depends on x");
    }
    if violations.is_empty() {
        Ok(())
    } else {
        Err(Error::InternalInconsistency { detail: violations.join("; ") })
    }
}
