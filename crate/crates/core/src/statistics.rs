//! Integer-valued sufficient statistics over site spaces.
//!
//! Every statistic component maps a configuration to an exact integer; real
//! statistics enter only through an optional rational scale per component, so
//! volume-table keys and increments never touch floating point.  Motif counts
//! are injective: each unordered motif instance contributes exactly once
//! (a complete 3-graph has 3 two-stars and 1 triangle).
//!
//! [`Evaluator`] binds a statistic to one family and index set, verifies the
//! pairing (component/family compatibility, covariate coverage, lookup-table
//! totality) up front, and then evaluates configurations infallibly.  It also
//! serves samplers through [`LocalState`]: a configuration plus the
//! incremental adjacency/degree caches needed to price a single-site change
//! in O(1) for the built-in graph statistics.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use smallvec::SmallVec;

use crate::statespace::{undirected_dyads, Configuration, IndexSet, SiteShape, SiteSpaceFamily};
use crate::{Error, Result};

/// Exact integer statistic value, one entry per component.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Debug, Serialize, Deserialize)]
#[serde(transparent)]
pub struct StatVector(SmallVec<[i64; 4]>);

impl StatVector {
    pub fn new(values: Vec<i64>) -> Self {
        StatVector(SmallVec::from_vec(values))
    }

    pub fn zeros(dim: usize) -> Self {
        StatVector(SmallVec::from_elem(0, dim))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[i64] {
        &self.0
    }

    pub fn get(&self, i: usize) -> i64 {
        self.0[i]
    }

    pub fn minus(&self, other: &StatVector) -> StatVector {
        debug_assert_eq!(self.dim(), other.dim());
        StatVector(self.0.iter().zip(other.0.iter()).map(|(a, b)| a - b).collect())
    }

    pub fn plus(&self, other: &StatVector) -> StatVector {
        debug_assert_eq!(self.dim(), other.dim());
        StatVector(self.0.iter().zip(other.0.iter()).map(|(a, b)| a + b).collect())
    }

    fn push(&mut self, v: i64) {
        self.0.push(v);
    }
}

impl std::fmt::Display for StatVector {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if self.dim() == 1 {
            return write!(f, "{}", self.0[0]);
        }
        let parts: Vec<String> = self.0.iter().map(|v| v.to_string()).collect();
        write!(f, "({})", parts.join(","))
    }
}

/// Rational scale applied to one integer component when it meets a real
/// parameter: the effective statistic is `value · num / den`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Scale {
    pub num: i64,
    pub den: i64,
}

impl Scale {
    pub fn new(num: i64, den: i64) -> Result<Self> {
        if den <= 0 || num == 0 {
            return Err(Error::InvalidArgument {
                detail: format!("scale {num}/{den} must have positive denominator and non-zero numerator"),
            });
        }
        Ok(Scale { num, den })
    }

    pub fn one() -> Self {
        Scale { num: 1, den: 1 }
    }

    pub fn as_f64(&self) -> f64 {
        self.num as f64 / self.den as f64
    }
}

impl Default for Scale {
    fn default() -> Self {
        Scale::one()
    }
}

/// Integer node covariates; node `i` (1-based) reads `values[i-1]`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CovariateTable {
    values: Vec<i64>,
}

impl CovariateTable {
    pub fn new(values: Vec<i64>) -> Self {
        CovariateTable { values }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, node: u32) -> Result<i64> {
        self.values
            .get((node - 1) as usize)
            .copied()
            .ok_or(Error::MissingCovariates { node })
    }
}

/// Per-dyad value rule: contributes `value` for every dyad whose state (and,
/// when constrained, endpoint covariate pair) matches.  An undirected dyad
/// has states {0,1}; a directed dyad on `{i<j}` has states 0..4 encoding
/// (i→j) in bit 0 and (j→i) in bit 1.  Covariate constraints match unordered
/// on undirected graphs and in node order `(i, j)`, `i < j`, on directed
/// graphs.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DyadicEntry {
    pub dyad_state: u8,
    pub covariates: Option<(i64, i64)>,
    pub value: i64,
}

/// Explicit statistic values, one dense table per supported index-set size,
/// indexed by canonical configuration rank.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LookupTable {
    tables: BTreeMap<u32, Vec<i64>>,
}

impl LookupTable {
    pub fn new(tables: BTreeMap<u32, Vec<i64>>) -> Result<Self> {
        if tables.is_empty() {
            return Err(Error::InvalidArgument {
                detail: "lookup table must declare at least one index-set size".into(),
            });
        }
        Ok(LookupTable { tables })
    }

    /// Tabulates `f` over the full configuration space of each size.
    pub fn from_fn(
        family: &SiteSpaceFamily,
        sizes: &[u32],
        guard: u64,
        mut f: impl FnMut(IndexSet, &Configuration) -> i64,
    ) -> Result<Self> {
        let mut tables = BTreeMap::new();
        for &n in sizes {
            let a = IndexSet::new(n)?;
            let values: Vec<i64> =
                family.enumerate_configurations(a, guard)?.map(|c| f(a, &c)).collect();
            tables.insert(n, values);
        }
        LookupTable::new(tables)
    }

    pub fn sizes(&self) -> impl Iterator<Item = u32> + '_ {
        self.tables.keys().copied()
    }

    fn table_for(&self, n: u32) -> Option<&[i64]> {
        self.tables.get(&n).map(|v| v.as_slice())
    }
}

/// One statistic component.
#[derive(Clone, Debug, PartialEq)]
pub enum StatComponent {
    /// Number of present edges (undirected) or arcs (directed).
    EdgeCount,
    /// Number of unordered node triples with all three edges present.
    TriangleCount,
    /// Number of k-stars: node pairs (center, k-subset of its neighbours).
    KStarCount { k: u32 },
    /// Sum of products of adjacent spins along the chain.
    IsingNearestNeighbor,
    /// Sum of per-dyad rule values.
    DyadicTerm { entries: Vec<DyadicEntry> },
    /// Explicit per-configuration values.
    LookupTable(LookupTable),
}

impl StatComponent {
    pub fn name(&self) -> &'static str {
        match self {
            StatComponent::EdgeCount => "edge-count",
            StatComponent::TriangleCount => "triangle-count",
            StatComponent::KStarCount { .. } => "k-star-count",
            StatComponent::IsingNearestNeighbor => "ising-nearest-neighbor",
            StatComponent::DyadicTerm { .. } => "dyadic-term",
            StatComponent::LookupTable(_) => "lookup-table",
        }
    }

    fn supports(&self, family: &SiteSpaceFamily) -> bool {
        match self {
            StatComponent::EdgeCount | StatComponent::DyadicTerm { .. } => matches!(
                family,
                SiteSpaceFamily::UndirectedGraph | SiteSpaceFamily::DirectedGraph
            ),
            StatComponent::TriangleCount | StatComponent::KStarCount { .. } => {
                matches!(family, SiteSpaceFamily::UndirectedGraph)
            }
            StatComponent::IsingNearestNeighbor => {
                matches!(family, SiteSpaceFamily::SpinSequence)
            }
            StatComponent::LookupTable(_) => true,
        }
    }
}

/// One component plus its scale.
#[derive(Clone, Debug, PartialEq)]
pub struct ComponentSpec {
    pub component: StatComponent,
    pub scale: Scale,
}

impl ComponentSpec {
    pub fn unscaled(component: StatComponent) -> Self {
        ComponentSpec { component, scale: Scale::one() }
    }
}

/// Sufficient statistic: an ordered list of components, `d ≥ 1`.
#[derive(Clone, Debug, PartialEq)]
pub struct StatisticSpec {
    components: Vec<ComponentSpec>,
}

impl StatisticSpec {
    pub fn new(components: Vec<ComponentSpec>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::InvalidArgument {
                detail: "statistic must have at least one component".into(),
            });
        }
        for c in &components {
            if let StatComponent::KStarCount { k } = c.component {
                if k == 0 {
                    return Err(Error::InvalidArgument { detail: "k-star order must be ≥ 1".into() });
                }
            }
            if let StatComponent::DyadicTerm { entries } = &c.component {
                for e in entries {
                    if e.dyad_state > 3 {
                        return Err(Error::InvalidArgument {
                            detail: format!("dyad state {} is out of range", e.dyad_state),
                        });
                    }
                }
            }
        }
        Ok(StatisticSpec { components })
    }

    /// Single unscaled component.
    pub fn single(component: StatComponent) -> Self {
        StatisticSpec { components: vec![ComponentSpec::unscaled(component)] }
    }

    pub fn dim(&self) -> usize {
        self.components.len()
    }

    pub fn components(&self) -> &[ComponentSpec] {
        &self.components
    }

    pub fn scales(&self) -> Vec<f64> {
        self.components.iter().map(|c| c.scale.as_f64()).collect()
    }

    /// Scaled inner product `Σ_j θ_j · t_j · scale_j`.
    pub fn dot(&self, theta: &[f64], t: &StatVector) -> f64 {
        debug_assert_eq!(theta.len(), self.dim());
        debug_assert_eq!(t.dim(), self.dim());
        self.components
            .iter()
            .zip(theta.iter().zip(t.as_slice()))
            .map(|(c, (&th, &v))| th * v as f64 * c.scale.as_f64())
            .sum()
    }

    /// Componentwise scaled values `t_j · scale_j`.
    pub fn scaled(&self, t: &StatVector) -> Vec<f64> {
        self.components
            .iter()
            .zip(t.as_slice())
            .map(|(c, &v)| v as f64 * c.scale.as_f64())
            .collect()
    }
}

/// Evaluates `t_A(x)` for all configurations `x` on a fixed family and index
/// set.
pub fn eval_statistic(
    spec: &StatisticSpec,
    family: &SiteSpaceFamily,
    a: IndexSet,
    x: &Configuration,
    cov: Option<&CovariateTable>,
) -> Result<StatVector> {
    let ev = Evaluator::new(spec, family, a, cov)?;
    ev.check_site_count(x)?;
    Ok(ev.eval(x))
}

/// Exact increment `t_B(x ∘ y) − t_A(x)` for nested index sets `a ⊆ b`.
pub fn statistic_increment(
    spec: &StatisticSpec,
    family: &SiteSpaceFamily,
    a: IndexSet,
    b: IndexSet,
    x_a: &Configuration,
    y: &Configuration,
    cov: Option<&CovariateTable>,
) -> Result<StatVector> {
    let x_b = family.compose(a, b, x_a, y)?;
    let ev_a = Evaluator::new(spec, family, a, cov)?;
    let ev_b = Evaluator::new(spec, family, b, cov)?;
    Ok(ev_b.eval(&x_b).minus(&ev_a.eval(x_a)))
}

/// Upper bound on nodes for the mask-based motif counters.
const MAX_MOTIF_NODES: u32 = 64;

/// A statistic bound to one `(family, index set, covariates)` triple with all
/// compatibility checks done and per-site lookups precomputed.
pub struct Evaluator<'a> {
    spec: &'a StatisticSpec,
    family: &'a SiteSpaceFamily,
    a: IndexSet,
    shape: SiteShape,
    site_count: u64,
    /// Endpoints (0-based) of undirected dyad `d`; directed site `s` maps to
    /// dyad `s/2` with direction `s%2`.
    dyads: Vec<(u32, u32)>,
    /// Per-component compiled dyad values: `[dyad][state] → value`.
    dyadic_values: Vec<Option<Vec<[i64; 4]>>>,
    /// Binomial rows `C(deg, k)` and `C(deg, k−1)` per k-star component.
    binom_rows: Vec<Option<(Vec<i64>, Vec<i64>)>>,
    needs_adjacency: bool,
}

impl<'a> Evaluator<'a> {
    pub fn new(
        spec: &'a StatisticSpec,
        family: &'a SiteSpaceFamily,
        a: IndexSet,
        cov: Option<&CovariateTable>,
    ) -> Result<Self> {
        let shape = family.shape(a)?;
        let site_count = shape.site_count();
        let n = a.n();

        let is_graph =
            matches!(family, SiteSpaceFamily::UndirectedGraph | SiteSpaceFamily::DirectedGraph);
        let dyads: Vec<(u32, u32)> =
            if is_graph { undirected_dyads(n).map(|(i, j)| (i - 1, j - 1)).collect() } else { Vec::new() };

        let mut dyadic_values = Vec::with_capacity(spec.dim());
        let mut binom_rows = Vec::with_capacity(spec.dim());
        let mut needs_adjacency = false;

        for c in spec.components() {
            if !c.component.supports(family) {
                return Err(Error::UnsupportedStatistic {
                    component: c.component.name().into(),
                    family: family.kind_name().into(),
                });
            }
            match &c.component {
                StatComponent::TriangleCount => {
                    if n > MAX_MOTIF_NODES {
                        return Err(Error::InvalidArgument {
                            detail: format!("motif counting supports at most {MAX_MOTIF_NODES} nodes"),
                        });
                    }
                    needs_adjacency = true;
                    dyadic_values.push(None);
                    binom_rows.push(None);
                }
                StatComponent::KStarCount { k } => {
                    if n > MAX_MOTIF_NODES {
                        return Err(Error::InvalidArgument {
                            detail: format!("motif counting supports at most {MAX_MOTIF_NODES} nodes"),
                        });
                    }
                    needs_adjacency = true;
                    let max_deg = n.saturating_sub(1);
                    let choose_k: Vec<i64> = (0..=max_deg).map(|d| binomial(d, *k)).collect();
                    let choose_km1: Vec<i64> = (0..=max_deg).map(|d| binomial(d, k - 1)).collect();
                    dyadic_values.push(None);
                    binom_rows.push(Some((choose_k, choose_km1)));
                }
                StatComponent::DyadicTerm { entries } => {
                    let states = match family {
                        SiteSpaceFamily::UndirectedGraph => 2u8,
                        _ => 4u8,
                    };
                    for e in entries {
                        if e.dyad_state >= states {
                            return Err(Error::InvalidArgument {
                                detail: format!(
                                    "dyad state {} is out of range for {}",
                                    e.dyad_state,
                                    family.kind_name()
                                ),
                            });
                        }
                    }
                    let constrained = entries.iter().any(|e| e.covariates.is_some());
                    let mut per_dyad = Vec::with_capacity(dyads.len());
                    for &(i, j) in &dyads {
                        let pair = if constrained {
                            let table = cov.ok_or(Error::MissingCovariates { node: i + 1 })?;
                            Some((table.get(i + 1)?, table.get(j + 1)?))
                        } else {
                            None
                        };
                        let mut values = [0i64; 4];
                        for e in entries {
                            let cov_ok = match (e.covariates, pair) {
                                (None, _) => true,
                                (Some((x, y)), Some((ci, cj))) => match family {
                                    SiteSpaceFamily::UndirectedGraph => {
                                        (x, y) == (ci, cj) || (y, x) == (ci, cj)
                                    }
                                    _ => (x, y) == (ci, cj),
                                },
                                (Some(_), None) => unreachable!(),
                            };
                            if cov_ok {
                                values[e.dyad_state as usize] += e.value;
                            }
                        }
                        per_dyad.push(values);
                    }
                    dyadic_values.push(Some(per_dyad));
                    binom_rows.push(None);
                }
                StatComponent::LookupTable(table) => {
                    let size = shape.size();
                    let declared = table.table_for(n).ok_or_else(|| Error::IncompleteTable {
                        n,
                        display: format!("(no table for size {n})"),
                    })?;
                    if declared.len() as u128 != size {
                        return Err(Error::IncompleteTable {
                            n,
                            display: format!(
                                "(table holds {} entries for a space of {size})",
                                declared.len()
                            ),
                        });
                    }
                    dyadic_values.push(None);
                    binom_rows.push(None);
                }
                StatComponent::EdgeCount | StatComponent::IsingNearestNeighbor => {
                    dyadic_values.push(None);
                    binom_rows.push(None);
                }
            }
        }

        Ok(Evaluator {
            spec,
            family,
            a,
            shape,
            site_count,
            dyads,
            dyadic_values,
            binom_rows,
            needs_adjacency,
        })
    }

    pub fn index_set(&self) -> IndexSet {
        self.a
    }

    pub fn shape(&self) -> &SiteShape {
        &self.shape
    }

    pub fn check_site_count(&self, x: &Configuration) -> Result<()> {
        if x.site_count() != self.site_count {
            return Err(Error::DimensionMismatch {
                expected: self.site_count as usize,
                got: x.site_count() as usize,
            });
        }
        Ok(())
    }

    /// Fresh local state around `x` with whatever caches the components need.
    pub fn local_state(&self, x: Configuration) -> LocalState {
        debug_assert_eq!(x.site_count(), self.site_count);
        let (adj, deg) = if self.needs_adjacency {
            self.adjacency(&x)
        } else {
            (Vec::new(), Vec::new())
        };
        LocalState { x, adj, deg }
    }

    fn adjacency(&self, x: &Configuration) -> (Vec<u64>, Vec<u32>) {
        let n = self.a.n() as usize;
        let mut adj = vec![0u64; n];
        let mut deg = vec![0u32; n];
        for (d, &(i, j)) in self.dyads.iter().enumerate() {
            if x.get(d as u64) == 1 {
                adj[i as usize] |= 1 << j;
                adj[j as usize] |= 1 << i;
                deg[i as usize] += 1;
                deg[j as usize] += 1;
            }
        }
        (adj, deg)
    }

    /// Full statistic value.
    pub fn eval(&self, x: &Configuration) -> StatVector {
        let mut state: Option<LocalState> = None;
        if self.needs_adjacency {
            state = Some(self.local_state(x.clone()));
        }
        let mut out = StatVector(SmallVec::with_capacity(self.spec.dim()));
        for (ci, c) in self.spec.components().iter().enumerate() {
            let v = match &c.component {
                StatComponent::EdgeCount => {
                    (0..self.site_count).filter(|&s| x.get(s) == 1).count() as i64
                }
                StatComponent::TriangleCount => {
                    let st = state.as_ref().unwrap();
                    let mut count = 0i64;
                    for (d, &(i, j)) in self.dyads.iter().enumerate() {
                        if x.get(d as u64) == 1 {
                            let above = if j as u64 + 1 >= 64 { 0 } else { !0u64 << (j + 1) };
                            count += (st.adj[i as usize] & st.adj[j as usize] & above).count_ones()
                                as i64;
                        }
                    }
                    count
                }
                StatComponent::KStarCount { .. } => {
                    let st = state.as_ref().unwrap();
                    let (choose_k, _) = self.binom_rows[ci].as_ref().unwrap();
                    st.deg.iter().map(|&d| choose_k[d as usize]).sum()
                }
                StatComponent::IsingNearestNeighbor => {
                    let mut sum = 0i64;
                    for s in 1..self.site_count {
                        let left = spin(x.get(s - 1));
                        let right = spin(x.get(s));
                        sum += (left * right) as i64;
                    }
                    sum
                }
                StatComponent::DyadicTerm { .. } => {
                    let per_dyad = self.dyadic_values[ci].as_ref().unwrap();
                    let mut sum = 0i64;
                    for (d, values) in per_dyad.iter().enumerate() {
                        sum += values[self.dyad_state(x, d)];
                    }
                    sum
                }
                StatComponent::LookupTable(table) => {
                    let rank = self.shape.rank(x).expect("lookup space rank fits u64");
                    table.table_for(self.a.n()).unwrap()[rank as usize]
                }
            };
            out.push(v);
        }
        out
    }

    fn dyad_state(&self, x: &Configuration, dyad: usize) -> usize {
        match self.family {
            SiteSpaceFamily::UndirectedGraph => x.get(dyad as u64) as usize,
            SiteSpaceFamily::DirectedGraph => {
                let s = 2 * dyad as u64;
                (x.get(s) | (x.get(s + 1) << 1)) as usize
            }
            _ => unreachable!(),
        }
    }

    /// Exact statistic change from setting `site` to `value` in `state`.
    /// O(1) for the built-in graph and chain components.
    pub fn site_delta(&self, state: &LocalState, site: u64, value: u8) -> StatVector {
        let cur = state.x.get(site);
        if cur == value {
            return StatVector::zeros(self.spec.dim());
        }
        let mut out = StatVector(SmallVec::with_capacity(self.spec.dim()));
        for (ci, c) in self.spec.components().iter().enumerate() {
            let v = match &c.component {
                StatComponent::EdgeCount => value as i64 - cur as i64,
                StatComponent::TriangleCount => {
                    let (i, j) = self.site_endpoints(site);
                    let common = (state.adj[i] & state.adj[j]).count_ones() as i64;
                    if value == 1 {
                        common
                    } else {
                        -common
                    }
                }
                StatComponent::KStarCount { .. } => {
                    let (_, choose_km1) = self.binom_rows[ci].as_ref().unwrap();
                    let (i, j) = self.site_endpoints(site);
                    // Degrees with the dyad absent.
                    let (di, dj) = if cur == 1 {
                        (state.deg[i] - 1, state.deg[j] - 1)
                    } else {
                        (state.deg[i], state.deg[j])
                    };
                    let gain = choose_km1[di as usize] + choose_km1[dj as usize];
                    if value == 1 {
                        gain
                    } else {
                        -gain
                    }
                }
                StatComponent::IsingNearestNeighbor => {
                    let mut nbr = 0i64;
                    if site > 0 {
                        nbr += spin(state.x.get(site - 1)) as i64;
                    }
                    if site + 1 < self.site_count {
                        nbr += spin(state.x.get(site + 1)) as i64;
                    }
                    (spin(value) - spin(cur)) as i64 * nbr
                }
                StatComponent::DyadicTerm { .. } => {
                    let per_dyad = self.dyadic_values[ci].as_ref().unwrap();
                    let dyad = self.dyad_of_site(site);
                    let old_state = self.dyad_state(&state.x, dyad);
                    let new_state = match self.family {
                        SiteSpaceFamily::UndirectedGraph => value as usize,
                        SiteSpaceFamily::DirectedGraph => {
                            let bit = (site % 2) as usize;
                            (old_state & !(1 << bit)) | ((value as usize) << bit)
                        }
                        _ => unreachable!(),
                    };
                    per_dyad[dyad][new_state] - per_dyad[dyad][old_state]
                }
                StatComponent::LookupTable(table) => {
                    let row = table.table_for(self.a.n()).unwrap();
                    let old_rank = self.shape.rank(&state.x).expect("lookup rank fits u64");
                    let mut probe = state.x.clone();
                    probe.set(site, value);
                    let new_rank = self.shape.rank(&probe).expect("lookup rank fits u64");
                    row[new_rank as usize] - row[old_rank as usize]
                }
            };
            out.push(v);
        }
        out
    }

    /// Writes `value` into `site`, keeping caches coherent.
    pub fn apply(&self, state: &mut LocalState, site: u64, value: u8) {
        let cur = state.x.get(site);
        if cur == value {
            return;
        }
        if self.needs_adjacency {
            let (i, j) = self.site_endpoints(site);
            if value == 1 {
                state.adj[i] |= 1 << j;
                state.adj[j] |= 1 << i;
                state.deg[i] += 1;
                state.deg[j] += 1;
            } else {
                state.adj[i] &= !(1 << j);
                state.adj[j] &= !(1 << i);
                state.deg[i] -= 1;
                state.deg[j] -= 1;
            }
        }
        state.x.set(site, value);
    }

    fn dyad_of_site(&self, site: u64) -> usize {
        match self.family {
            SiteSpaceFamily::UndirectedGraph => site as usize,
            SiteSpaceFamily::DirectedGraph => (site / 2) as usize,
            _ => unreachable!(),
        }
    }

    /// 0-based endpoints of the dyad owning `site` (undirected view).
    fn site_endpoints(&self, site: u64) -> (usize, usize) {
        let (i, j) = self.dyads[self.dyad_of_site(site)];
        (i as usize, j as usize)
    }
}

/// Configuration plus the incremental caches [`Evaluator`] maintains for it.
pub struct LocalState {
    x: Configuration,
    adj: Vec<u64>,
    deg: Vec<u32>,
}

impl LocalState {
    pub fn configuration(&self) -> &Configuration {
        &self.x
    }

    pub fn into_configuration(self) -> Configuration {
        self.x
    }
}

fn spin(symbol: u8) -> i32 {
    if symbol == 0 {
        1
    } else {
        -1
    }
}

/// `C(n, k)` as an exact i64; saturates on overflow, which the 64-node cap
/// keeps out of reach.
fn binomial(n: u32, k: u32) -> i64 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: i128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as i128 / (i + 1) as i128;
    }
    acc.min(i64::MAX as i128) as i64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::statespace::Alphabet;

    fn idx(n: u32) -> IndexSet {
        IndexSet::new(n).unwrap()
    }

    fn graph_config(n: u32, edges: &[(u32, u32)]) -> Configuration {
        let fam = SiteSpaceFamily::UndirectedGraph;
        let sites = fam.site_count(idx(n)).unwrap();
        let mut x = Configuration::zero_bits(sites);
        for (s, (i, j)) in undirected_dyads(n).enumerate() {
            if edges.contains(&(i, j)) || edges.contains(&(j, i)) {
                x.set(s as u64, 1);
            }
        }
        x
    }

    fn s31_spec() -> (SiteSpaceFamily, StatisticSpec) {
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
        let spec = StatisticSpec::single(StatComponent::LookupTable(table));
        (family, spec)
    }

    #[test]
    fn edge_count_counts_present_sites() {
        let fam = SiteSpaceFamily::UndirectedGraph;
        let spec = StatisticSpec::single(StatComponent::EdgeCount);
        let x = graph_config(4, &[(1, 2), (1, 3), (3, 4)]);
        let t = eval_statistic(&spec, &fam, idx(4), &x, None).unwrap();
        assert_eq!(t.as_slice(), &[3]);
    }

    #[test]
    fn triangle_count_on_a_triangle_with_a_pendant() {
        let fam = SiteSpaceFamily::UndirectedGraph;
        let spec = StatisticSpec::single(StatComponent::TriangleCount);
        let x = graph_config(4, &[(1, 2), (1, 3), (2, 3), (3, 4)]);
        let t = eval_statistic(&spec, &fam, idx(4), &x, None).unwrap();
        assert_eq!(t.as_slice(), &[1]);
    }

    #[test]
    fn two_star_census_counts_each_instance_once() {
        let fam = SiteSpaceFamily::UndirectedGraph;
        let spec = StatisticSpec::single(StatComponent::KStarCount { k: 2 });
        let path = graph_config(3, &[(1, 2), (2, 3)]);
        assert_eq!(eval_statistic(&spec, &fam, idx(3), &path, None).unwrap().as_slice(), &[1]);
        let complete = graph_config(3, &[(1, 2), (1, 3), (2, 3)]);
        assert_eq!(eval_statistic(&spec, &fam, idx(3), &complete, None).unwrap().as_slice(), &[3]);
    }

    #[test]
    fn ising_statistic_sums_adjacent_products() {
        let fam = SiteSpaceFamily::SpinSequence;
        let spec = StatisticSpec::single(StatComponent::IsingNearestNeighbor);
        // (+1, +1, −1): 1·1 + 1·(−1) = 0.
        let x = fam.configuration_from_symbols(idx(3), &[0, 0, 1]).unwrap();
        assert_eq!(eval_statistic(&spec, &fam, idx(3), &x, None).unwrap().as_slice(), &[0]);
    }

    #[test]
    fn lookup_table_reads_the_declared_values() {
        let (family, spec) = s31_spec();
        let a = family.configuration_from_names(idx(1), &["a"]).unwrap();
        assert_eq!(eval_statistic(&spec, &family, idx(1), &a, None).unwrap().as_slice(), &[1]);
        let c = family.configuration_from_names(idx(1), &["c"]).unwrap();
        assert_eq!(eval_statistic(&spec, &family, idx(1), &c, None).unwrap().as_slice(), &[-1]);
        let ai = family.configuration_from_names(idx(2), &["a", "i"]).unwrap();
        assert_eq!(eval_statistic(&spec, &family, idx(2), &ai, None).unwrap().as_slice(), &[2]);
        let div = family.configuration_from_names(idx(2), &["d", "iv"]).unwrap();
        assert_eq!(eval_statistic(&spec, &family, idx(2), &div, None).unwrap().as_slice(), &[0]);
    }

    #[test]
    fn lookup_table_must_cover_the_requested_size() {
        let (family, spec) = s31_spec();
        // Tables declare sizes 1 and 2 only; the family itself stops at 2,
        // so drop to a lookup that misses size 1.
        let short = LookupTable::from_fn(&family, &[2], 64, |_, _| 0).unwrap();
        let spec_short = StatisticSpec::single(StatComponent::LookupTable(short));
        let x = family.configuration_from_names(idx(1), &["a"]).unwrap();
        match eval_statistic(&spec_short, &family, idx(1), &x, None) {
            Err(Error::IncompleteTable { n: 1, .. }) => {}
            other => panic!("expected IncompleteTable, got {other:?}"),
        }
        drop(spec);
    }

    #[test]
    fn increments_subtract_the_base_statistic() {
        let (family, spec) = s31_spec();
        let x = family.configuration_from_names(idx(1), &["a"]).unwrap();
        let ext = family.extension_shape(idx(1), idx(2)).unwrap();
        let y_i = ext.from_symbols(&[0]).unwrap();
        let inc = statistic_increment(&spec, &family, idx(1), idx(2), &x, &y_i, None).unwrap();
        assert_eq!(inc.as_slice(), &[1]);
        let y_iii = ext.from_symbols(&[2]).unwrap();
        let inc = statistic_increment(&spec, &family, idx(1), idx(2), &x, &y_iii, None).unwrap();
        assert_eq!(inc.as_slice(), &[-1]);
    }

    #[test]
    fn ising_increment_from_an_agreeing_spin_is_plus_one() {
        let fam = SiteSpaceFamily::SpinSequence;
        let spec = StatisticSpec::single(StatComponent::IsingNearestNeighbor);
        let x = fam.configuration_from_symbols(idx(2), &[0, 0]).unwrap();
        let ext = fam.extension_shape(idx(2), idx(3)).unwrap();
        let agree = ext.from_symbols(&[0]).unwrap();
        let inc = statistic_increment(&spec, &fam, idx(2), idx(3), &x, &agree, None).unwrap();
        assert_eq!(inc.as_slice(), &[1]);
    }

    #[test]
    fn triangle_increment_for_an_isolated_new_node_is_zero() {
        let fam = SiteSpaceFamily::UndirectedGraph;
        let spec = StatisticSpec::new(vec![
            ComponentSpec::unscaled(StatComponent::EdgeCount),
            ComponentSpec::unscaled(StatComponent::TriangleCount),
        ])
        .unwrap();
        let x = graph_config(3, &[(1, 2), (1, 3), (2, 3)]);
        let ext = fam.extension_shape(idx(3), idx(4)).unwrap();
        let isolated = ext.from_symbols(&[0, 0, 0]).unwrap();
        let inc = statistic_increment(&spec, &fam, idx(3), idx(4), &x, &isolated, None).unwrap();
        assert_eq!(inc.as_slice(), &[0, 0]);
        let fan = ext.from_symbols(&[1, 1, 0]).unwrap();
        let inc = statistic_increment(&spec, &fam, idx(3), idx(4), &x, &fan, None).unwrap();
        assert_eq!(inc.as_slice(), &[2, 1]);
    }

    #[test]
    fn dyadic_term_splits_edges_by_block() {
        let fam = SiteSpaceFamily::UndirectedGraph;
        let cov = CovariateTable::new(vec![0, 1, 0, 1]);
        let within0 = StatComponent::DyadicTerm {
            entries: vec![DyadicEntry { dyad_state: 1, covariates: Some((0, 0)), value: 1 }],
        };
        let cross = StatComponent::DyadicTerm {
            entries: vec![DyadicEntry { dyad_state: 1, covariates: Some((0, 1)), value: 1 }],
        };
        let spec = StatisticSpec::new(vec![
            ComponentSpec::unscaled(within0),
            ComponentSpec::unscaled(cross),
        ])
        .unwrap();
        // Edges: 1-3 within block 0, 1-2 and 3-4 cross.
        let x = graph_config(4, &[(1, 3), (1, 2), (3, 4)]);
        let t = eval_statistic(&spec, &fam, idx(4), &x, Some(&cov)).unwrap();
        assert_eq!(t.as_slice(), &[1, 2]);
    }

    #[test]
    fn dyadic_term_without_covariates_errors_when_constrained() {
        let fam = SiteSpaceFamily::UndirectedGraph;
        let spec = StatisticSpec::single(StatComponent::DyadicTerm {
            entries: vec![DyadicEntry { dyad_state: 1, covariates: Some((0, 0)), value: 1 }],
        });
        let x = graph_config(3, &[(1, 2)]);
        match eval_statistic(&spec, &fam, idx(3), &x, None) {
            Err(Error::MissingCovariates { .. }) => {}
            other => panic!("expected MissingCovariates, got {other:?}"),
        }
    }

    #[test]
    fn statistics_reject_unsupported_families() {
        let spec = StatisticSpec::single(StatComponent::TriangleCount);
        let fam = SiteSpaceFamily::BinarySequence;
        let x = Configuration::zero_bits(3);
        match eval_statistic(&spec, &fam, idx(3), &x, None) {
            Err(Error::UnsupportedStatistic { .. }) => {}
            other => panic!("expected UnsupportedStatistic, got {other:?}"),
        }
    }

    #[test]
    fn site_deltas_match_full_reevaluation() {
        let fam = SiteSpaceFamily::UndirectedGraph;
        let spec = StatisticSpec::new(vec![
            ComponentSpec::unscaled(StatComponent::EdgeCount),
            ComponentSpec::unscaled(StatComponent::TriangleCount),
            ComponentSpec::unscaled(StatComponent::KStarCount { k: 2 }),
        ])
        .unwrap();
        let a = idx(5);
        let ev = Evaluator::new(&spec, &fam, a, None).unwrap();
        let start = graph_config(5, &[(1, 2), (2, 3), (1, 3), (4, 5), (2, 4)]);
        let mut state = ev.local_state(start);
        let sites = fam.site_count(a).unwrap();
        for step in 0..50u64 {
            let site = (step * 7) % sites;
            let value = ((step / 3) % 2) as u8;
            let before = ev.eval(state.configuration());
            let delta = ev.site_delta(&state, site, value);
            ev.apply(&mut state, site, value);
            let after = ev.eval(state.configuration());
            assert_eq!(after.minus(&before), delta, "step {step} site {site} value {value}");
        }
    }

    #[test]
    fn ising_site_deltas_match_full_reevaluation() {
        let fam = SiteSpaceFamily::SpinSequence;
        let spec = StatisticSpec::single(StatComponent::IsingNearestNeighbor);
        let a = idx(6);
        let ev = Evaluator::new(&spec, &fam, a, None).unwrap();
        let start = fam.configuration_from_symbols(a, &[0, 1, 1, 0, 1, 0]).unwrap();
        let mut state = ev.local_state(start);
        for step in 0..24u64 {
            let site = step % 6;
            let value = ((step / 5) % 2) as u8;
            let before = ev.eval(state.configuration());
            let delta = ev.site_delta(&state, site, value);
            ev.apply(&mut state, site, value);
            let after = ev.eval(state.configuration());
            assert_eq!(after.minus(&before), delta);
        }
    }

    #[test]
    fn scaled_dot_applies_rational_scales() {
        let spec = StatisticSpec::new(vec![ComponentSpec {
            component: StatComponent::EdgeCount,
            scale: Scale::new(1, 2).unwrap(),
        }])
        .unwrap();
        let t = StatVector::new(vec![3]);
        assert_eq!(spec.dot(&[2.0], &t), 3.0);
        assert_eq!(spec.scaled(&t), vec![1.5]);
    }

    #[test]
    fn binomial_handles_edge_cases() {
        assert_eq!(binomial(5, 0), 1);
        assert_eq!(binomial(5, 6), 0);
        assert_eq!(binomial(6, 2), 15);
        assert_eq!(binomial(63, 31), 916312070471295267);
    }
}
