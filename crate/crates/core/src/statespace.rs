//! Index sets, site-space families, and packed configurations.
//!
//! An index set is always a prefix `{1..n}` of an unbounded site index
//! sequence, so nesting of index sets is just `n ≤ m`.  Each family kind maps
//! an index set to a finite list of *sites* in a fixed canonical order chosen
//! so that the sites of a smaller index set are a prefix of the sites of any
//! larger one:
//!
//! * sequences: site `i` is position `i+1`;
//! * undirected graphs: dyads `(i,j)`, `i < j`, grouped by the larger
//!   endpoint — `(1,2), (1,3), (2,3), (1,4), …`;
//! * directed graphs: for each larger endpoint `k`, the pairs
//!   `(1,k), (k,1), (2,k), (k,2), …`.
//!
//! A [`Configuration`] assigns one alphabet symbol to each site, packed one
//! bit per site for the binary kinds and one byte per site for explicit
//! products.  Because nested index sets share a site prefix, projecting a
//! configuration down is a truncation (a mask for the bit kinds), and the
//! canonical rank of a configuration obeys
//! `rank(x_B) = rank(x_A) + |X_A| · rank(y)` where `y` is the assignment of
//! the new sites.  Enumeration yields configurations in rank order, and any
//! contiguous rank interval can be enumerated independently, so sweeps can be
//! chunked deterministically.

use serde::{Deserialize, Serialize};
use smallvec::SmallVec;

use crate::{Error, Result};

/// Prefix index set `{1..n}`, `n ≥ 1`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct IndexSet(u32);

impl IndexSet {
    pub fn new(n: u32) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidArgument { detail: "index set must have n ≥ 1".into() });
        }
        Ok(IndexSet(n))
    }

    pub fn n(&self) -> u32 {
        self.0
    }

    pub fn is_subset_of(&self, other: IndexSet) -> bool {
        self.0 <= other.0
    }
}

impl std::fmt::Display for IndexSet {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{{1..{}}}", self.0)
    }
}

/// Finite, non-empty alphabet for one coordinate of an explicit product.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Alphabet {
    symbols: Vec<String>,
}

impl Alphabet {
    pub fn new(symbols: Vec<String>) -> Result<Self> {
        if symbols.is_empty() {
            return Err(Error::InvalidArgument { detail: "alphabet must be non-empty".into() });
        }
        if symbols.len() > 255 {
            return Err(Error::InvalidArgument {
                detail: format!("alphabet holds {} symbols, over the limit of 255", symbols.len()),
            });
        }
        for (i, s) in symbols.iter().enumerate() {
            if symbols[..i].contains(s) {
                return Err(Error::InvalidArgument {
                    detail: format!("alphabet symbol {s:?} repeats"),
                });
            }
        }
        Ok(Alphabet { symbols })
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn symbol(&self, index: u8) -> &str {
        &self.symbols[index as usize]
    }

    pub fn index_of(&self, symbol: &str) -> Option<u8> {
        self.symbols.iter().position(|s| s == symbol).map(|i| i as u8)
    }
}

/// Family of nested site spaces, one configuration space per index set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum SiteSpaceFamily {
    /// One {0,1} site per index.
    BinarySequence,
    /// One {+1,−1} site per index; symbol 0 is +1, symbol 1 is −1.
    SpinSequence,
    /// One {0,1} site per unordered node pair.
    UndirectedGraph,
    /// One {0,1} site per ordered node pair.
    DirectedGraph,
    /// One site per index with the declared alphabet; defined only for
    /// index sets no larger than the declared length.
    ExplicitProduct(Vec<Alphabet>),
}

impl SiteSpaceFamily {
    pub fn kind_name(&self) -> &'static str {
        match self {
            SiteSpaceFamily::BinarySequence => "binary-sequence",
            SiteSpaceFamily::SpinSequence => "spin-sequence",
            SiteSpaceFamily::UndirectedGraph => "undirected-graph",
            SiteSpaceFamily::DirectedGraph => "directed-graph",
            SiteSpaceFamily::ExplicitProduct(_) => "explicit-product",
        }
    }

    /// Number of sites the index set `{1..n}` induces.
    pub fn site_count(&self, a: IndexSet) -> Result<u64> {
        let n = a.n() as u64;
        match self {
            SiteSpaceFamily::BinarySequence | SiteSpaceFamily::SpinSequence => Ok(n),
            SiteSpaceFamily::UndirectedGraph => Ok(n * (n - 1) / 2),
            SiteSpaceFamily::DirectedGraph => Ok(n * (n - 1)),
            SiteSpaceFamily::ExplicitProduct(alphabets) => {
                if n > alphabets.len() as u64 {
                    Err(Error::IndexOutOfRange { n: a.n(), declared: alphabets.len() as u32 })
                } else {
                    Ok(n)
                }
            }
        }
    }

    fn is_bit_packed(&self) -> bool {
        !matches!(self, SiteSpaceFamily::ExplicitProduct(_))
    }

    /// Product structure of the sites in `[site_lo, site_hi)` of index set `b`.
    fn shape_range(&self, b: IndexSet, site_lo: u64, site_hi: u64) -> Result<SiteShape> {
        debug_assert!(site_hi <= self.site_count(b)?);
        if self.is_bit_packed() {
            Ok(SiteShape::Bits { sites: (site_hi - site_lo) as u32 })
        } else if let SiteSpaceFamily::ExplicitProduct(alphabets) = self {
            let radices = alphabets[site_lo as usize..site_hi as usize]
                .iter()
                .map(|al| al.len() as u8)
                .collect();
            Ok(SiteShape::Symbols { radices })
        } else {
            unreachable!()
        }
    }

    /// Product structure of the full site space of `a`.
    pub fn shape(&self, a: IndexSet) -> Result<SiteShape> {
        let sites = self.site_count(a)?;
        self.shape_range(a, 0, sites)
    }

    /// Product structure of the sites added when `a` grows to `b`.
    pub fn extension_shape(&self, a: IndexSet, b: IndexSet) -> Result<SiteShape> {
        self.require_nested(a, b)?;
        let lo = self.site_count(a)?;
        let hi = self.site_count(b)?;
        self.shape_range(b, lo, hi)
    }

    pub fn require_nested(&self, a: IndexSet, b: IndexSet) -> Result<()> {
        if a.is_subset_of(b) {
            Ok(())
        } else {
            Err(Error::NotNested { sub: a.n(), sup: b.n() })
        }
    }

    /// Number of configurations on `a`; saturates at `u128::MAX`.
    pub fn space_size(&self, a: IndexSet) -> Result<u128> {
        Ok(self.shape(a)?.size())
    }

    /// All configurations on `a` in canonical rank order.
    pub fn enumerate_configurations(&self, a: IndexSet, guard: u64) -> Result<ConfigIter> {
        self.shape(a)?.iter_all(guard)
    }

    /// Configurations on `a` with ranks in `[start, end)`.  The interval must
    /// lie inside `[0, |X_a|)`; chunked callers stay under the guard by
    /// checking the full size once.
    pub fn enumerate_range(&self, a: IndexSet, start: u64, end: u64) -> Result<ConfigIter> {
        self.shape(a)?.iter_range(start, end)
    }

    pub fn decode(&self, a: IndexSet, rank: u64) -> Result<Configuration> {
        self.shape(a)?.decode(rank)
    }

    pub fn rank(&self, a: IndexSet, x: &Configuration) -> Result<u64> {
        self.shape(a)?.rank(x)
    }

    /// Restriction of `x_b` to the sites of the smaller index set `a`.
    pub fn project_configuration(
        &self,
        x_b: &Configuration,
        b: IndexSet,
        a: IndexSet,
    ) -> Result<Configuration> {
        self.require_nested(a, b)?;
        let total = self.site_count(b)?;
        if x_b.site_count() != total {
            return Err(Error::DimensionMismatch {
                expected: total as usize,
                got: x_b.site_count() as usize,
            });
        }
        Ok(x_b.truncated(self.site_count(a)?))
    }

    /// Configuration on `b` whose `a`-sites come from `x_a` and whose new
    /// sites come from `y`.
    pub fn compose(
        &self,
        a: IndexSet,
        b: IndexSet,
        x_a: &Configuration,
        y: &Configuration,
    ) -> Result<Configuration> {
        self.require_nested(a, b)?;
        let k_a = self.site_count(a)?;
        let k_b = self.site_count(b)?;
        if x_a.site_count() != k_a {
            return Err(Error::DimensionMismatch { expected: k_a as usize, got: x_a.site_count() as usize });
        }
        if y.site_count() != k_b - k_a {
            return Err(Error::DimensionMismatch {
                expected: (k_b - k_a) as usize,
                got: y.site_count() as usize,
            });
        }
        Ok(x_a.concat(y))
    }

    /// Inverse of [`compose`](Self::compose).
    pub fn split(
        &self,
        a: IndexSet,
        b: IndexSet,
        x_b: &Configuration,
    ) -> Result<(Configuration, Configuration)> {
        let x_a = self.project_configuration(x_b, b, a)?;
        let k_a = self.site_count(a)?;
        let y = x_b.suffix(k_a);
        Ok((x_a, y))
    }

    /// Builds a configuration from one symbol index per site.
    pub fn configuration_from_symbols(&self, a: IndexSet, symbols: &[u8]) -> Result<Configuration> {
        let shape = self.shape(a)?;
        shape.from_symbols(symbols)
    }

    /// Builds an explicit-product configuration from symbol names.
    pub fn configuration_from_names(&self, a: IndexSet, names: &[&str]) -> Result<Configuration> {
        match self {
            SiteSpaceFamily::ExplicitProduct(alphabets) => {
                let sites = self.site_count(a)? as usize;
                if names.len() != sites {
                    return Err(Error::DimensionMismatch { expected: sites, got: names.len() });
                }
                let mut symbols = Vec::with_capacity(sites);
                for (i, name) in names.iter().enumerate() {
                    let idx = alphabets[i].index_of(name).ok_or_else(|| Error::InvalidArgument {
                        detail: format!("symbol {name:?} is not in the alphabet of index {}", i + 1),
                    })?;
                    symbols.push(idx);
                }
                self.configuration_from_symbols(a, &symbols)
            }
            _ => Err(Error::InvalidArgument {
                detail: "named symbols apply only to explicit-product families".into(),
            }),
        }
    }

    /// Human-readable rendering of a configuration on `a`.
    pub fn display(&self, a: IndexSet, x: &Configuration) -> String {
        match self {
            SiteSpaceFamily::BinarySequence => {
                (0..x.site_count()).map(|s| if x.get(s) == 0 { '0' } else { '1' }).collect()
            }
            SiteSpaceFamily::SpinSequence => {
                (0..x.site_count()).map(|s| if x.get(s) == 0 { '+' } else { '-' }).collect()
            }
            SiteSpaceFamily::UndirectedGraph => {
                let edges: Vec<String> = undirected_dyads(a.n())
                    .enumerate()
                    .filter(|(s, _)| x.get(*s as u64) == 1)
                    .map(|(_, (i, j))| format!("{i}-{j}"))
                    .collect();
                format!("{{{}}}", edges.join(","))
            }
            SiteSpaceFamily::DirectedGraph => {
                let arcs: Vec<String> = directed_pairs(a.n())
                    .enumerate()
                    .filter(|(s, _)| x.get(*s as u64) == 1)
                    .map(|(_, (i, j))| format!("{i}>{j}"))
                    .collect();
                format!("{{{}}}", arcs.join(","))
            }
            SiteSpaceFamily::ExplicitProduct(alphabets) => (0..x.site_count())
                .map(|s| alphabets[s as usize].symbol(x.get(s)).to_string())
                .collect::<Vec<_>>()
                .join(","),
        }
    }
}

/// Dyads of an undirected graph on `{1..n}` in canonical site order.
pub fn undirected_dyads(n: u32) -> impl Iterator<Item = (u32, u32)> {
    (2..=n).flat_map(|j| (1..j).map(move |i| (i, j)))
}

/// Ordered pairs of a directed graph on `{1..n}` in canonical site order.
pub fn directed_pairs(n: u32) -> impl Iterator<Item = (u32, u32)> {
    (2..=n).flat_map(|k| (1..k).flat_map(move |i| [(i, k), (k, i)]))
}

/// Product structure of an ordered site range: either `sites` binary sites or
/// one explicit radix per site.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum SiteShape {
    Bits { sites: u32 },
    Symbols { radices: SmallVec<[u8; 16]> },
}

impl SiteShape {
    pub fn site_count(&self) -> u64 {
        match self {
            SiteShape::Bits { sites } => *sites as u64,
            SiteShape::Symbols { radices } => radices.len() as u64,
        }
    }

    /// Number of configurations; saturates at `u128::MAX`.
    pub fn size(&self) -> u128 {
        match self {
            SiteShape::Bits { sites } => {
                if *sites >= 128 {
                    u128::MAX
                } else {
                    1u128 << sites
                }
            }
            SiteShape::Symbols { radices } => {
                let mut size = 1u128;
                for &r in radices {
                    size = size.saturating_mul(r as u128);
                }
                size
            }
        }
    }

    /// Size as a `u64` after checking it against the enumeration guard.
    pub fn guarded_size(&self, guard: u64) -> Result<u64> {
        let size = self.size();
        if size > guard as u128 {
            Err(Error::SpaceTooLarge { size, guard })
        } else {
            Ok(size as u64)
        }
    }

    pub fn radix(&self, site: u64) -> u8 {
        match self {
            SiteShape::Bits { .. } => 2,
            SiteShape::Symbols { radices } => radices[site as usize],
        }
    }

    pub fn decode(&self, rank: u64) -> Result<Configuration> {
        let size = self.size();
        if (rank as u128) >= size {
            return Err(Error::InvalidArgument {
                detail: format!("rank {rank} is out of range for a space of {size} configurations"),
            });
        }
        match self {
            SiteShape::Bits { sites } => {
                let words_len = (*sites as usize).div_ceil(64).max(1);
                let mut words: SmallVec<[u64; 2]> = SmallVec::with_capacity(words_len);
                words.push(rank);
                words.extend(std::iter::repeat_n(0, words_len - 1));
                Ok(Configuration { sites: *sites as u64, payload: Payload::Bits(words) })
            }
            SiteShape::Symbols { radices } => {
                let mut symbols: SmallVec<[u8; 16]> = SmallVec::with_capacity(radices.len());
                let mut rest = rank;
                for &r in radices {
                    symbols.push((rest % r as u64) as u8);
                    rest /= r as u64;
                }
                Ok(Configuration { sites: radices.len() as u64, payload: Payload::Symbols(symbols) })
            }
        }
    }

    /// Canonical rank: the mixed-radix value of the site assignment with
    /// site 0 least significant.  Fails when the rank exceeds `u64`.
    pub fn rank(&self, x: &Configuration) -> Result<u64> {
        if x.site_count() != self.site_count() {
            return Err(Error::DimensionMismatch {
                expected: self.site_count() as usize,
                got: x.site_count() as usize,
            });
        }
        match (&x.payload, self) {
            (Payload::Bits(words), SiteShape::Bits { .. }) => {
                if words.iter().skip(1).any(|&w| w != 0) {
                    return Err(Error::InvalidArgument {
                        detail: "configuration rank exceeds u64".into(),
                    });
                }
                Ok(words[0])
            }
            (Payload::Symbols(symbols), SiteShape::Symbols { radices }) => {
                let mut rank = 0u128;
                let mut stride = 1u128;
                for (s, &r) in symbols.iter().zip(radices.iter()) {
                    rank += *s as u128 * stride;
                    stride = stride.saturating_mul(r as u128);
                }
                u64::try_from(rank).map_err(|_| Error::InvalidArgument {
                    detail: "configuration rank exceeds u64".into(),
                })
            }
            _ => Err(Error::InvalidArgument {
                detail: "configuration payload does not match the family kind".into(),
            }),
        }
    }

    pub fn from_symbols(&self, symbols: &[u8]) -> Result<Configuration> {
        if symbols.len() as u64 != self.site_count() {
            return Err(Error::DimensionMismatch {
                expected: self.site_count() as usize,
                got: symbols.len(),
            });
        }
        for (site, &s) in symbols.iter().enumerate() {
            let r = self.radix(site as u64);
            if s >= r {
                return Err(Error::InvalidArgument {
                    detail: format!("symbol index {s} at site {site} exceeds radix {r}"),
                });
            }
        }
        match self {
            SiteShape::Bits { sites } => {
                let mut c = Configuration::zero_bits(*sites as u64);
                for (site, &s) in symbols.iter().enumerate() {
                    c.set(site as u64, s);
                }
                Ok(c)
            }
            SiteShape::Symbols { .. } => Ok(Configuration {
                sites: symbols.len() as u64,
                payload: Payload::Symbols(SmallVec::from_slice(symbols)),
            }),
        }
    }

    /// All configurations, guarded.
    pub fn iter_all(&self, guard: u64) -> Result<ConfigIter> {
        let size = self.guarded_size(guard)?;
        self.iter_range(0, size)
    }

    /// Configurations with ranks in `[start, end)`.
    pub fn iter_range(&self, start: u64, end: u64) -> Result<ConfigIter> {
        let size = self.size();
        if start > end || (end as u128) > size {
            return Err(Error::InvalidArgument {
                detail: format!("rank range [{start}, {end}) is out of bounds for size {size}"),
            });
        }
        let current = if start == end {
            // Placeholder; never yielded.
            self.decode(0).unwrap_or_else(|_| Configuration::zero_bits(0))
        } else {
            self.decode(start)?
        };
        Ok(ConfigIter { shape: self.clone(), current, remaining: end - start })
    }
}

/// One alphabet symbol per site of a contiguous canonical site range, packed.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub struct Configuration {
    sites: u64,
    payload: Payload,
}

#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
enum Payload {
    /// Site `s` lives in bit `s % 64` of word `s / 64`; bits past `sites`
    /// stay zero so equality and hashing work structurally.
    Bits(SmallVec<[u64; 2]>),
    Symbols(SmallVec<[u8; 16]>),
}

impl Configuration {
    pub fn zero_bits(sites: u64) -> Self {
        let words_len = (sites as usize).div_ceil(64).max(1);
        Configuration {
            sites,
            payload: Payload::Bits(SmallVec::from_elem(0, words_len)),
        }
    }

    pub fn site_count(&self) -> u64 {
        self.sites
    }

    pub fn get(&self, site: u64) -> u8 {
        debug_assert!(site < self.sites);
        match &self.payload {
            Payload::Bits(words) => ((words[(site / 64) as usize] >> (site % 64)) & 1) as u8,
            Payload::Symbols(symbols) => symbols[site as usize],
        }
    }

    pub fn set(&mut self, site: u64, value: u8) {
        debug_assert!(site < self.sites);
        match &mut self.payload {
            Payload::Bits(words) => {
                debug_assert!(value < 2);
                let w = &mut words[(site / 64) as usize];
                let bit = 1u64 << (site % 64);
                if value == 0 {
                    *w &= !bit;
                } else {
                    *w |= bit;
                }
            }
            Payload::Symbols(symbols) => symbols[site as usize] = value,
        }
    }

    pub fn symbols(&self) -> Vec<u8> {
        (0..self.sites).map(|s| self.get(s)).collect()
    }

    /// Sites `[0, keep)`.
    fn truncated(&self, keep: u64) -> Configuration {
        debug_assert!(keep <= self.sites);
        match &self.payload {
            Payload::Bits(words) => {
                let words_len = (keep as usize).div_ceil(64).max(1);
                let mut out: SmallVec<[u64; 2]> = SmallVec::from_slice(&words[..words_len]);
                let tail = keep % 64;
                if tail != 0 {
                    out[words_len - 1] &= (1u64 << tail) - 1;
                } else if keep == 0 {
                    out[0] = 0;
                }
                Configuration { sites: keep, payload: Payload::Bits(out) }
            }
            Payload::Symbols(symbols) => Configuration {
                sites: keep,
                payload: Payload::Symbols(SmallVec::from_slice(&symbols[..keep as usize])),
            },
        }
    }

    /// Sites `[from, sites)`, re-based at zero.
    fn suffix(&self, from: u64) -> Configuration {
        debug_assert!(from <= self.sites);
        let keep = self.sites - from;
        match &self.payload {
            Payload::Bits(_) => {
                let mut out = Configuration::zero_bits(keep);
                for s in 0..keep {
                    out.set(s, self.get(from + s));
                }
                out
            }
            Payload::Symbols(symbols) => Configuration {
                sites: keep,
                payload: Payload::Symbols(SmallVec::from_slice(&symbols[from as usize..])),
            },
        }
    }

    fn concat(&self, tail: &Configuration) -> Configuration {
        let total = self.sites + tail.sites;
        match (&self.payload, &tail.payload) {
            (Payload::Bits(_), Payload::Bits(_)) => {
                let mut out = Configuration::zero_bits(total);
                for s in 0..self.sites {
                    out.set(s, self.get(s));
                }
                for s in 0..tail.sites {
                    out.set(self.sites + s, tail.get(s));
                }
                out
            }
            (Payload::Symbols(a), Payload::Symbols(b)) => {
                let mut symbols = SmallVec::with_capacity(a.len() + b.len());
                symbols.extend_from_slice(a);
                symbols.extend_from_slice(b);
                Configuration { sites: total, payload: Payload::Symbols(symbols) }
            }
            _ => panic!("cannot concatenate configurations of different payload kinds"),
        }
    }
}

/// Rank-order iterator over a contiguous range of configurations.
pub struct ConfigIter {
    shape: SiteShape,
    current: Configuration,
    remaining: u64,
}

impl Iterator for ConfigIter {
    type Item = Configuration;

    fn next(&mut self) -> Option<Configuration> {
        if self.remaining == 0 {
            return None;
        }
        self.remaining -= 1;
        let out = self.current.clone();
        if self.remaining > 0 {
            self.advance();
        }
        Some(out)
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let r = self.remaining as usize;
        (r, Some(r))
    }
}

impl ExactSizeIterator for ConfigIter {}

impl ConfigIter {
    fn advance(&mut self) {
        match &mut self.current.payload {
            Payload::Bits(words) => {
                for w in words.iter_mut() {
                    let (next, carry) = w.overflowing_add(1);
                    *w = next;
                    if !carry {
                        break;
                    }
                }
            }
            Payload::Symbols(symbols) => {
                if let SiteShape::Symbols { radices } = &self.shape {
                    for (s, r) in symbols.iter_mut().zip(radices.iter()) {
                        *s += 1;
                        if *s < *r {
                            break;
                        }
                        *s = 0;
                    }
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn idx(n: u32) -> IndexSet {
        IndexSet::new(n).unwrap()
    }

    fn s31_family() -> SiteSpaceFamily {
        let a = Alphabet::new(vec!["a".into(), "b".into(), "c".into(), "d".into()]).unwrap();
        let b = Alphabet::new(vec!["i".into(), "ii".into(), "iii".into(), "iv".into(), "v".into()])
            .unwrap();
        SiteSpaceFamily::ExplicitProduct(vec![a, b])
    }

    #[test]
    fn site_counts_per_kind() {
        assert_eq!(SiteSpaceFamily::BinarySequence.site_count(idx(3)).unwrap(), 3);
        assert_eq!(SiteSpaceFamily::SpinSequence.site_count(idx(7)).unwrap(), 7);
        assert_eq!(SiteSpaceFamily::UndirectedGraph.site_count(idx(4)).unwrap(), 6);
        assert_eq!(SiteSpaceFamily::UndirectedGraph.site_count(idx(1)).unwrap(), 0);
        assert_eq!(SiteSpaceFamily::DirectedGraph.site_count(idx(3)).unwrap(), 6);
        assert_eq!(s31_family().site_count(idx(2)).unwrap(), 2);
    }

    #[test]
    fn explicit_product_rejects_oversized_index_sets() {
        match s31_family().site_count(idx(3)) {
            Err(Error::IndexOutOfRange { n: 3, declared: 2 }) => {}
            other => panic!("expected IndexOutOfRange, got {other:?}"),
        }
    }

    #[test]
    fn space_sizes() {
        assert_eq!(SiteSpaceFamily::UndirectedGraph.space_size(idx(4)).unwrap(), 64);
        assert_eq!(s31_family().space_size(idx(2)).unwrap(), 20);
        assert_eq!(s31_family().space_size(idx(1)).unwrap(), 4);
        assert_eq!(SiteSpaceFamily::SpinSequence.space_size(idx(130)).unwrap(), u128::MAX);
    }

    #[test]
    fn guard_rejects_large_spaces() {
        let fam = SiteSpaceFamily::UndirectedGraph;
        match fam.enumerate_configurations(idx(8), 1 << 20) {
            Err(Error::SpaceTooLarge { size, guard }) => {
                assert_eq!(size, 1 << 28);
                assert_eq!(guard, 1 << 20);
            }
            other => panic!("expected SpaceTooLarge, got {:?}", other.map(|_| ())),
        }
    }

    #[test]
    fn enumeration_is_rank_ordered_and_stable() {
        let fam = SiteSpaceFamily::BinarySequence;
        let seen: Vec<String> =
            fam.enumerate_configurations(idx(2), 16).unwrap().map(|c| fam.display(idx(2), &c)).collect();
        assert_eq!(seen, vec!["00", "10", "01", "11"]);
        let again: Vec<String> =
            fam.enumerate_configurations(idx(2), 16).unwrap().map(|c| fam.display(idx(2), &c)).collect();
        assert_eq!(seen, again);
    }

    #[test]
    fn range_chunks_cover_the_full_enumeration() {
        let fam = SiteSpaceFamily::UndirectedGraph;
        let a = idx(4);
        let full: Vec<Configuration> = fam.enumerate_configurations(a, 1 << 10).unwrap().collect();
        let mut chunked = Vec::new();
        for (lo, hi) in [(0, 10), (10, 17), (17, 64)] {
            chunked.extend(fam.enumerate_range(a, lo, hi).unwrap());
        }
        assert_eq!(full, chunked);
        assert_eq!(fam.enumerate_range(a, 5, 5).unwrap().count(), 0);
    }

    #[test]
    fn rank_and_decode_are_inverse() {
        let fam = s31_family();
        let a = idx(2);
        for (expected, c) in fam.enumerate_configurations(a, 64).unwrap().enumerate() {
            assert_eq!(fam.rank(a, &c).unwrap(), expected as u64);
            assert_eq!(fam.decode(a, expected as u64).unwrap(), c);
        }
    }

    #[test]
    fn graph_projection_keeps_the_induced_subgraph() {
        let fam = SiteSpaceFamily::UndirectedGraph;
        let b = idx(4);
        let a = idx(3);
        // Sites for n=4: (1,2) (1,3) (2,3) (1,4) (2,4) (3,4).
        let x = fam.configuration_from_symbols(b, &[1, 1, 0, 0, 0, 1]).unwrap();
        assert_eq!(fam.display(b, &x), "{1-2,1-3,3-4}");
        let down = fam.project_configuration(&x, b, a).unwrap();
        assert_eq!(fam.display(a, &down), "{1-2,1-3}");
    }

    #[test]
    fn spin_projection_drops_trailing_sites() {
        let fam = SiteSpaceFamily::SpinSequence;
        let x = fam.configuration_from_symbols(idx(3), &[0, 1, 0]).unwrap();
        assert_eq!(fam.display(idx(3), &x), "+-+");
        let down = fam.project_configuration(&x, idx(3), idx(2)).unwrap();
        assert_eq!(fam.display(idx(2), &down), "+-");
    }

    #[test]
    fn projection_to_the_same_index_set_is_identity() {
        let fam = s31_family();
        let x = fam.configuration_from_names(idx(2), &["c", "iv"]).unwrap();
        assert_eq!(fam.project_configuration(&x, idx(2), idx(2)).unwrap(), x);
    }

    #[test]
    fn projection_to_a_larger_index_set_is_rejected() {
        let fam = SiteSpaceFamily::BinarySequence;
        let x = fam.configuration_from_symbols(idx(2), &[1, 0]).unwrap();
        match fam.project_configuration(&x, idx(2), idx(3)) {
            Err(Error::NotNested { sub: 3, sup: 2 }) => {}
            other => panic!("expected NotNested, got {other:?}"),
        }
    }

    #[test]
    fn compose_and_split_invert_each_other() {
        let fam = SiteSpaceFamily::UndirectedGraph;
        let (a, b) = (idx(3), idx(5));
        let x_a = fam.configuration_from_symbols(a, &[1, 0, 1]).unwrap();
        let ext_shape = fam.extension_shape(a, b).unwrap();
        assert_eq!(ext_shape.site_count(), 7);
        let y = ext_shape.from_symbols(&[0, 1, 0, 1, 1, 0, 0]).unwrap();
        let x_b = fam.compose(a, b, &x_a, &y).unwrap();
        let (back_a, back_y) = fam.split(a, b, &x_b).unwrap();
        assert_eq!(back_a, x_a);
        assert_eq!(back_y, y);
    }

    #[test]
    fn composite_rank_splits_into_base_and_extension_ranks() {
        let fam = s31_family();
        let (a, b) = (idx(1), idx(2));
        let size_a = fam.space_size(a).unwrap() as u64;
        let ext = fam.extension_shape(a, b).unwrap();
        for x in fam.enumerate_configurations(a, 64).unwrap() {
            for y in ext.iter_all(64).unwrap() {
                let x_b = fam.compose(a, b, &x, &y).unwrap();
                let rank = fam.rank(b, &x_b).unwrap();
                assert_eq!(rank % size_a, fam.rank(a, &x).unwrap());
                assert_eq!(rank / size_a, ext.rank(&y).unwrap());
            }
        }
    }

    #[test]
    fn enumerate_then_project_partitions_fibers_evenly() {
        let fam = SiteSpaceFamily::SpinSequence;
        let (a, b) = (idx(3), idx(5));
        let mut hits = std::collections::HashMap::new();
        for x_b in fam.enumerate_configurations(b, 64).unwrap() {
            let down = fam.project_configuration(&x_b, b, a).unwrap();
            *hits.entry(down).or_insert(0u64) += 1;
        }
        assert_eq!(hits.len(), 8);
        assert!(hits.values().all(|&c| c == 4));
    }

    #[test]
    fn directed_pair_order_nests() {
        let pairs: Vec<(u32, u32)> = directed_pairs(3).collect();
        assert_eq!(pairs, vec![(1, 2), (2, 1), (1, 3), (3, 1), (2, 3), (3, 2)]);
        let smaller: Vec<(u32, u32)> = directed_pairs(2).collect();
        assert_eq!(&pairs[..2], &smaller[..]);
    }

    #[test]
    fn alphabet_rejects_duplicates() {
        assert!(Alphabet::new(vec!["a".into(), "a".into()]).is_err());
        assert!(Alphabet::new(vec![]).is_err());
    }

    #[test]
    fn long_bit_configurations_cross_word_boundaries() {
        let fam = SiteSpaceFamily::BinarySequence;
        let a = idx(130);
        let mut x = Configuration::zero_bits(130);
        x.set(0, 1);
        x.set(70, 1);
        x.set(129, 1);
        assert_eq!(x.get(70), 1);
        assert_eq!(x.get(71), 0);
        let down = fam.project_configuration(&x, a, idx(71)).unwrap();
        assert_eq!(down.get(0), 1);
        assert_eq!(down.get(70), 1);
        assert_eq!((0..71).map(|s| down.get(s) as u32).sum::<u32>(), 2);
    }
}
