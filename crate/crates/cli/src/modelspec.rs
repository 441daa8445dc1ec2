//! Model specification documents: the on-disk JSON format, its parser, and
//! the validator that turns a document into a live model.
//!
//! Parsing and validation are separate stages.  Parsing rejects malformed
//! JSON and unknown keys with a single positioned error; validation walks the
//! whole document and reports every violation it finds, each tagged with the
//! JSON path it occurred at.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use projcheck_core::expfam::ExpFamModel;
use projcheck_core::statespace::{Alphabet, SiteSpaceFamily};
use projcheck_core::statistics::{
    ComponentSpec, CovariateTable, DyadicEntry, LookupTable, Scale, StatComponent, StatisticSpec,
};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpecDocument {
    pub schema_version: u32,
    pub family: FamilyBlock,
    pub statistic: Vec<ComponentBlock>,
    pub theta: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub covariates: Option<Vec<i64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub experiment: Option<ExperimentBlock>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FamilyBlock {
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alphabets: Option<Vec<Vec<String>>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComponentBlock {
    pub component: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub entries: Option<Vec<DyadicEntryBlock>>,
    /// Lookup values per index-set size, rank-ordered.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tables: Option<BTreeMap<String, Vec<i64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scale: Option<ScaleBlock>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DyadicEntryBlock {
    pub dyad_state: u8,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub covariates: Option<(i64, i64)>,
    pub value: i64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScaleBlock {
    pub num: i64,
    pub den: i64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentBlock {
    pub theta_star: Vec<f64>,
    pub sizes: Vec<u32>,
    pub replicates: u32,
    pub seed: u64,
    pub burn_in: u32,
    pub thinning: u32,
    pub sample_count: u32,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SpecError {
    pub code: &'static str,
    pub path: String,
    pub message: String,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(transparent)]
pub struct SpecErrors(pub Vec<SpecError>);

impl fmt::Display for SpecErrors {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, e) in self.0.iter().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            write!(f, "{}: {} ({})", e.path, e.message, e.code)?;
        }
        Ok(())
    }
}

impl std::error::Error for SpecErrors {}

/// Model ready to run, plus the optional experiment settings it shipped with.
#[derive(Debug)]
pub struct ValidatedModel {
    pub model: ExpFamModel,
    pub experiment: Option<ExperimentBlock>,
}

pub fn parse_model_spec(bytes: &[u8]) -> Result<ModelSpecDocument, SpecErrors> {
    let text = std::str::from_utf8(bytes).map_err(|e| {
        SpecErrors(vec![SpecError {
            code: "SchemaError",
            path: "$".into(),
            message: format!("document is not UTF-8: {e}"),
        }])
    })?;
    serde_json::from_str(text).map_err(|e| {
        SpecErrors(vec![SpecError {
            code: "SchemaError",
            path: format!("$ (line {}, column {})", e.line(), e.column()),
            message: e.to_string(),
        }])
    })
}

struct Collector(Vec<SpecError>);

impl Collector {
    fn push(&mut self, code: &'static str, path: impl Into<String>, message: impl Into<String>) {
        self.0.push(SpecError { code, path: path.into(), message: message.into() });
    }

    fn schema(&mut self, path: impl Into<String>, message: impl Into<String>) {
        self.push("SchemaError", path, message);
    }
}

const COMPONENT_NAMES: [&str; 6] = [
    "edge-count",
    "triangle-count",
    "k-star-count",
    "ising-nearest-neighbor",
    "dyadic-term",
    "lookup-table",
];

/// Full semantic validation; collects every violation before giving up.
pub fn validate_model_spec(doc: &ModelSpecDocument) -> Result<ValidatedModel, SpecErrors> {
    let mut errors = Collector(Vec::new());

    if doc.schema_version != SCHEMA_VERSION {
        errors.schema(
            "$.schema_version",
            format!("unsupported version {} (expected {SCHEMA_VERSION})", doc.schema_version),
        );
    }

    let family = validate_family(&doc.family, &mut errors);

    let mut components: Vec<ComponentSpec> = Vec::new();
    let mut all_components_ok = true;
    for (i, block) in doc.statistic.iter().enumerate() {
        match validate_component(block, i, &mut errors) {
            Some(c) => components.push(c),
            None => all_components_ok = false,
        }
    }
    if doc.statistic.is_empty() {
        errors.schema("$.statistic", "at least one component is required");
        all_components_ok = false;
    }

    let needs_covariates = doc
        .statistic
        .iter()
        .flat_map(|b| b.entries.iter().flatten())
        .any(|e| e.covariates.is_some());
    if needs_covariates && doc.covariates.is_none() {
        errors.schema(
            "$.covariates",
            "dyadic entries filter on covariates but no covariate table is declared",
        );
    }

    let spec = if all_components_ok {
        match StatisticSpec::new(components) {
            Ok(spec) => Some(spec),
            Err(e) => {
                errors.schema("$.statistic", e.to_string());
                None
            }
        }
    } else {
        None
    };

    if let Some(spec) = &spec {
        if doc.theta.len() != spec.dim() {
            errors.schema(
                "$.theta",
                format!("{} entries for a {}-component statistic", doc.theta.len(), spec.dim()),
            );
        }
    }
    for (i, v) in doc.theta.iter().enumerate() {
        if !v.is_finite() {
            errors.schema(format!("$.theta[{i}]"), "parameter must be finite");
        }
    }

    if let Some(exp) = &doc.experiment {
        validate_experiment(exp, spec.as_ref().map(|s| s.dim()), &mut errors);
    }

    if let (Some(family), Some(spec)) = (family, spec) {
        // Probe each component against the family; errors other than a
        // support mismatch are probe artifacts (e.g. a lookup table that
        // starts above the probe size) and are left to runtime.
        let probe_set = smallest_index_set(&family);
        for (i, c) in spec.components().iter().enumerate() {
            let single = StatisticSpec::single(c.component.clone());
            if let Err(e @ projcheck_core::Error::UnsupportedStatistic { .. }) =
                projcheck_core::statistics::Evaluator::new(&single, &family, probe_set, None)
            {
                errors.push("UnknownStatistic", format!("$.statistic[{i}]"), e.to_string());
            }
        }
        if errors.0.is_empty() {
            let covariates = doc.covariates.clone().map(CovariateTable::new);
            match ExpFamModel::new(family, spec, doc.theta.clone(), covariates) {
                Ok(model) => {
                    return Ok(ValidatedModel { model, experiment: doc.experiment.clone() })
                }
                Err(e) => errors.schema("$", e.to_string()),
            }
        }
    }
    Err(SpecErrors(errors.0))
}

/// Smallest index set the family admits, used to probe component support.
fn smallest_index_set(family: &SiteSpaceFamily) -> projcheck_core::statespace::IndexSet {
    let n = match family {
        SiteSpaceFamily::ExplicitProduct(_) => 1,
        _ => 2,
    };
    projcheck_core::statespace::IndexSet::new(n).expect("small index set")
}

fn validate_family(block: &FamilyBlock, errors: &mut Collector) -> Option<SiteSpaceFamily> {
    let family = match block.kind.as_str() {
        "binary-sequence" => Some(SiteSpaceFamily::BinarySequence),
        "spin-sequence" => Some(SiteSpaceFamily::SpinSequence),
        "undirected-graph" => Some(SiteSpaceFamily::UndirectedGraph),
        "directed-graph" => Some(SiteSpaceFamily::DirectedGraph),
        "explicit-product" => {
            let Some(alphabet_blocks) = &block.alphabets else {
                errors.schema("$.family.alphabets", "explicit-product requires alphabets");
                return None;
            };
            if alphabet_blocks.is_empty() {
                errors.schema("$.family.alphabets", "at least one alphabet is required");
                return None;
            }
            let mut alphabets = Vec::with_capacity(alphabet_blocks.len());
            let mut ok = true;
            for (i, symbols) in alphabet_blocks.iter().enumerate() {
                match Alphabet::new(symbols.clone()) {
                    Ok(a) => alphabets.push(a),
                    Err(e) => {
                        errors.schema(format!("$.family.alphabets[{i}]"), e.to_string());
                        ok = false;
                    }
                }
            }
            return ok.then_some(SiteSpaceFamily::ExplicitProduct(alphabets));
        }
        other => {
            errors.schema("$.family.kind", format!("unknown family kind \"{other}\""));
            return None;
        }
    };
    if block.alphabets.is_some() {
        errors.schema(
            "$.family.alphabets",
            format!("alphabets are only meaningful for explicit-product, not {}", block.kind),
        );
    }
    family
}

fn validate_component(
    block: &ComponentBlock,
    index: usize,
    errors: &mut Collector,
) -> Option<ComponentSpec> {
    let path = format!("$.statistic[{index}]");
    let name = block.component.as_str();
    if !COMPONENT_NAMES.contains(&name) {
        errors.push(
            "UnknownStatistic",
            format!("{path}.component"),
            format!("unknown statistic component \"{name}\""),
        );
        return None;
    }

    let forbid = |field: &str, present: bool, errors: &mut Collector| {
        if present {
            errors.schema(
                format!("{path}.{field}"),
                format!("\"{field}\" does not apply to {name}"),
            );
        }
    };
    if name != "k-star-count" {
        forbid("k", block.k.is_some(), errors);
    }
    if name != "dyadic-term" {
        forbid("entries", block.entries.is_some(), errors);
    }
    if name != "lookup-table" {
        forbid("tables", block.tables.is_some(), errors);
    }

    let component = match name {
        "edge-count" => Some(StatComponent::EdgeCount),
        "triangle-count" => Some(StatComponent::TriangleCount),
        "ising-nearest-neighbor" => Some(StatComponent::IsingNearestNeighbor),
        "k-star-count" => match block.k {
            Some(k) if k >= 1 => Some(StatComponent::KStarCount { k }),
            Some(_) => {
                errors.schema(format!("{path}.k"), "k must be at least 1");
                None
            }
            None => {
                errors.schema(format!("{path}.k"), "k-star-count requires \"k\"");
                None
            }
        },
        "dyadic-term" => match &block.entries {
            Some(entries) if !entries.is_empty() => Some(StatComponent::DyadicTerm {
                entries: entries
                    .iter()
                    .map(|e| DyadicEntry {
                        dyad_state: e.dyad_state,
                        covariates: e.covariates,
                        value: e.value,
                    })
                    .collect(),
            }),
            _ => {
                errors.schema(
                    format!("{path}.entries"),
                    "dyadic-term requires a non-empty \"entries\" list",
                );
                None
            }
        },
        "lookup-table" => match &block.tables {
            Some(tables) if !tables.is_empty() => {
                let mut parsed = BTreeMap::new();
                let mut sizes_ok = true;
                for (key, values) in tables {
                    match key.parse::<u32>() {
                        Ok(n) if n >= 1 => {
                            parsed.insert(n, values.clone());
                        }
                        _ => {
                            errors.schema(
                                format!("{path}.tables[\"{key}\"]"),
                                "table keys are index-set sizes (positive integers)",
                            );
                            sizes_ok = false;
                        }
                    }
                }
                if sizes_ok {
                    match LookupTable::new(parsed) {
                        Ok(table) => Some(StatComponent::LookupTable(table)),
                        Err(e) => {
                            errors.schema(format!("{path}.tables"), e.to_string());
                            None
                        }
                    }
                } else {
                    None
                }
            }
            _ => {
                errors.schema(
                    format!("{path}.tables"),
                    "lookup-table requires a non-empty \"tables\" map",
                );
                None
            }
        },
        _ => unreachable!("name checked against COMPONENT_NAMES"),
    };

    let scale = match block.scale {
        None => Some(Scale::one()),
        Some(s) => match Scale::new(s.num, s.den) {
            Ok(scale) => Some(scale),
            Err(e) => {
                errors.schema(format!("{path}.scale"), e.to_string());
                None
            }
        },
    };

    match (component, scale) {
        (Some(component), Some(scale)) => Some(ComponentSpec { component, scale }),
        _ => None,
    }
}

fn validate_experiment(block: &ExperimentBlock, dim: Option<usize>, errors: &mut Collector) {
    if let Some(dim) = dim {
        if block.theta_star.len() != dim {
            errors.schema(
                "$.experiment.theta_star",
                format!("{} entries for a {dim}-component statistic", block.theta_star.len()),
            );
        }
    }
    if block.theta_star.iter().any(|v| !v.is_finite()) {
        errors.schema("$.experiment.theta_star", "parameters must be finite");
    }
    if block.sizes.is_empty() {
        errors.schema("$.experiment.sizes", "at least one size is required");
    }
    if block.sizes.windows(2).any(|w| w[0] >= w[1]) {
        errors.schema("$.experiment.sizes", "sizes must be strictly increasing");
    }
    for (field, value) in [
        ("replicates", block.replicates),
        ("burn_in", block.burn_in),
        ("thinning", block.thinning),
        ("sample_count", block.sample_count),
    ] {
        if value == 0 {
            errors.schema(format!("$.experiment.{field}"), "must be at least 1");
        }
    }
}
