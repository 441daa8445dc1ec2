//! `projcheck`: projectivity diagnostics and inference for discrete
//! exponential-family models described by JSON model specs.
//!
//! Exit codes: 0 success, 1 failed projectivity verdict, 2 usage or spec
//! errors, 3 internal inconsistency.

use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use projcheck::commands::{
    run_check, run_experiment, run_fit, run_rate, run_sample, run_scale, CmdError,
};
use projcheck::modelspec::{parse_model_spec, validate_model_spec, SpecErrors, ValidatedModel};
use projcheck::report::{emit, spec_digest, ErrorBody, ErrorReport, RunReport, TOOL_VERSION};

/// Bundled example specs, resolvable by name when `--spec` is not a file.
const FIXTURES: &[(&str, &str)] = &[
    ("coupled-increments", include_str!("../fixtures/coupled-increments.json")),
    ("ising-chain", include_str!("../fixtures/ising-chain.json")),
    ("edge-ergm", include_str!("../fixtures/edge-ergm.json")),
    ("edge-triangle-ergm", include_str!("../fixtures/edge-triangle-ergm.json")),
    ("two-star-ergm", include_str!("../fixtures/two-star-ergm.json")),
    ("two-block-dyadic", include_str!("../fixtures/two-block-dyadic.json")),
];

#[derive(Parser)]
#[command(
    name = "projcheck",
    version,
    about = "Projectivity diagnostics and inference for discrete exponential-family models"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Model spec: a JSON file path, or the name of a bundled fixture
    #[arg(long)]
    spec: PathBuf,
    /// Output file (JSON report; CSV table for scale and experiment)
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker thread count (default: all cores)
    #[arg(long)]
    threads: Option<usize>,
    /// Lift the state-space enumeration guard
    #[arg(long)]
    force_large: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Run the projectivity checks between two nested sizes
    Check {
        #[command(flatten)]
        common: Common,
        /// Retained size (default: smallest the family admits)
        #[arg(long)]
        sub: Option<u32>,
        /// Extended size (default: sub + 1)
        #[arg(long = "super")]
        sup: Option<u32>,
        /// Parameter grid for the direct check: points split by ';', components by ','
        #[arg(long)]
        theta_grid: Option<String>,
        /// Relative tolerance for probability comparisons
        #[arg(long)]
        tol: Option<f64>,
    },
    /// Fit the parameters to an observed statistic
    Fit {
        #[command(flatten)]
        common: Common,
        /// Size to fit at (default: smallest the family admits)
        #[arg(long)]
        sub: Option<u32>,
        /// Observed statistic, comma-separated; fractional values fit the mean
        #[arg(long)]
        observed: String,
        /// Sampler seed for the stochastic fallback
        #[arg(long)]
        seed: Option<u64>,
        /// Gradient tolerance for the fit
        #[arg(long)]
        tol: Option<f64>,
    },
    /// Draw Gibbs samples from the model
    Sample {
        #[command(flatten)]
        common: Common,
        /// Size to sample at (default: smallest the family admits)
        #[arg(long)]
        sub: Option<u32>,
        /// Sampler seed
        #[arg(long)]
        seed: Option<u64>,
        /// Number of samples to draw
        #[arg(long)]
        reps: Option<u32>,
    },
    /// Tabulate log-partition growth across sizes
    Scale {
        #[command(flatten)]
        common: Common,
        /// Sizes to profile, comma-separated
        #[arg(long)]
        sizes: String,
    },
    /// Evaluate the large-deviations rate function at a target statistic
    Rate {
        #[command(flatten)]
        common: Common,
        /// Size whose partition function anchors the rate (default: smallest)
        #[arg(long)]
        sub: Option<u32>,
        /// Target statistic value, comma-separated
        #[arg(long)]
        observed: String,
        /// Gradient tolerance for the inner optimization
        #[arg(long)]
        tol: Option<f64>,
    },
    /// Run the simulate-and-refit consistency experiment from the model file
    Experiment {
        #[command(flatten)]
        common: Common,
        /// Override the experiment sizes, comma-separated
        #[arg(long)]
        sizes: Option<String>,
        /// Override the experiment seed
        #[arg(long)]
        seed: Option<u64>,
        /// Override the replicate count
        #[arg(long)]
        reps: Option<u32>,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Check { .. } => "check",
            Command::Fit { .. } => "fit",
            Command::Sample { .. } => "sample",
            Command::Scale { .. } => "scale",
            Command::Rate { .. } => "rate",
            Command::Experiment { .. } => "experiment",
        }
    }

    fn common(&self) -> &Common {
        match self {
            Command::Check { common, .. }
            | Command::Fit { common, .. }
            | Command::Sample { common, .. }
            | Command::Scale { common, .. }
            | Command::Rate { common, .. }
            | Command::Experiment { common, .. } => common,
        }
    }
}

fn parse_csv_f64(flag: &str, s: &str) -> Result<Vec<f64>, String> {
    s.split(',')
        .map(|p| p.trim().parse::<f64>().map_err(|_| format!("--{flag}: cannot parse '{p}'")))
        .collect()
}

fn parse_csv_u32(flag: &str, s: &str) -> Result<Vec<u32>, String> {
    s.split(',')
        .map(|p| p.trim().parse::<u32>().map_err(|_| format!("--{flag}: cannot parse '{p}'")))
        .collect()
}

/// Grid syntax: points split by ';', components within a point by ','.
fn parse_theta_grid(s: &str) -> Result<Vec<Vec<f64>>, String> {
    s.split(';').map(|point| parse_csv_f64("theta-grid", point)).collect()
}

fn resolve_guard(force_large: bool) -> Result<u64, String> {
    if force_large {
        return Ok(u64::MAX);
    }
    match std::env::var("PROJCHECK_GUARD") {
        Ok(v) => v
            .trim()
            .parse::<u64>()
            .map_err(|_| format!("PROJCHECK_GUARD must be an unsigned integer, got '{v}'")),
        Err(_) => Ok(projcheck_core::DEFAULT_ENUM_GUARD),
    }
}

fn load_spec(path: &Path) -> Result<Vec<u8>, String> {
    if path.exists() {
        return std::fs::read(path).map_err(|e| format!("cannot read {}: {e}", path.display()));
    }
    let name = path.to_string_lossy();
    let trimmed = name.strip_suffix(".json").unwrap_or(&name);
    for (fixture, body) in FIXTURES {
        if *fixture == trimmed {
            return Ok(body.as_bytes().to_vec());
        }
    }
    let names: Vec<&str> = FIXTURES.iter().map(|(n, _)| *n).collect();
    Err(format!(
        "{name} is neither a readable file nor a bundled fixture (bundled: {})",
        names.join(", ")
    ))
}

/// Smallest index set the family supports with a non-degenerate statistic.
fn default_sub(model: &ValidatedModel) -> u32 {
    use projcheck_core::statespace::SiteSpaceFamily;
    match model.model.family {
        SiteSpaceFamily::ExplicitProduct(_) => 1,
        _ => 2,
    }
}

struct Reporter {
    command: &'static str,
    digest: Option<String>,
    start: Instant,
}

impl Reporter {
    fn usage_error(&self, detail: String) -> i32 {
        self.error("InvalidArgument".into(), detail, None, 2)
    }

    fn spec_errors(&self, errs: SpecErrors) -> i32 {
        let code = errs.0.first().map(|e| e.code.to_string()).unwrap_or_else(|| "SchemaError".into());
        let detail = errs.to_string();
        self.error(code, detail, Some(errs.0), 2)
    }

    fn command_error(&self, err: CmdError) -> i32 {
        let exit = err.exit_code();
        self.error(err.code().into(), err.to_string(), None, exit)
    }

    fn error(
        &self,
        code: String,
        detail: String,
        violations: Option<Vec<projcheck::modelspec::SpecError>>,
        exit: i32,
    ) -> i32 {
        let report = ErrorReport {
            command: self.command,
            spec_digest: self.digest.clone(),
            tool_version: TOOL_VERSION,
            wall_time_ms: self.start.elapsed().as_millis() as u64,
            error: ErrorBody { code, detail, violations },
        };
        if emit(&report, None).is_err() {
            return 3;
        }
        exit
    }
}

fn main() {
    let cli = Cli::parse();
    let start = Instant::now();
    std::process::exit(run(cli, start));
}

fn run(cli: Cli, start: Instant) -> i32 {
    let common = cli.command.common();
    let mut reporter = Reporter { command: cli.command.name(), digest: None, start };

    if let Some(threads) = common.threads {
        if threads == 0 {
            return reporter.usage_error("--threads must be at least 1".into());
        }
        // Ignore failure: the global pool can only be installed once.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global();
    }

    let guard = match resolve_guard(common.force_large) {
        Ok(g) => g,
        Err(detail) => return reporter.usage_error(detail),
    };

    let bytes = match load_spec(&common.spec) {
        Ok(b) => b,
        Err(detail) => return reporter.usage_error(detail),
    };
    reporter.digest = Some(spec_digest(&bytes));

    let doc = match parse_model_spec(&bytes) {
        Ok(d) => d,
        Err(errs) => return reporter.spec_errors(errs),
    };
    let validated = match validate_model_spec(&doc) {
        Ok(v) => v,
        Err(errs) => return reporter.spec_errors(errs),
    };
    let model = &validated.model;
    let experiment = validated.experiment.as_ref();

    // scale and experiment write their tables to --out, so their JSON report
    // goes to stdout; every other command treats --out as the report file.
    let json_out = match &cli.command {
        Command::Scale { .. } | Command::Experiment { .. } => None,
        _ => common.out.clone(),
    };

    let outcome = match &cli.command {
        Command::Check { sub, sup, theta_grid, tol, .. } => {
            let sub = sub.unwrap_or_else(|| default_sub(&validated));
            let sup = sup.unwrap_or(sub + 1);
            let grid = match theta_grid.as_deref().map(parse_theta_grid).transpose() {
                Ok(g) => g,
                Err(detail) => return reporter.usage_error(detail),
            };
            run_check(model, sub, sup, grid, *tol, guard)
        }
        Command::Fit { sub, observed, seed, tol, .. } => {
            let sub = sub.unwrap_or_else(|| default_sub(&validated));
            let target = match parse_csv_f64("observed", observed) {
                Ok(t) => t,
                Err(detail) => return reporter.usage_error(detail),
            };
            run_fit(model, experiment, sub, &target, *seed, *tol, guard)
        }
        Command::Sample { sub, seed, reps, .. } => {
            let sub = sub.unwrap_or_else(|| default_sub(&validated));
            run_sample(model, experiment, sub, *seed, *reps)
        }
        Command::Scale { sizes, .. } => match parse_csv_u32("sizes", sizes) {
            Ok(sizes) => run_scale(model, &sizes, guard, common.out.as_deref()),
            Err(detail) => return reporter.usage_error(detail),
        },
        Command::Rate { sub, observed, tol, .. } => {
            let sub = sub.unwrap_or_else(|| default_sub(&validated));
            let target = match parse_csv_f64("observed", observed) {
                Ok(t) => t,
                Err(detail) => return reporter.usage_error(detail),
            };
            run_rate(model, sub, &target, *tol, guard)
        }
        Command::Experiment { sizes, seed, reps, .. } => {
            let block = match experiment {
                Some(b) => b,
                None => {
                    return reporter
                        .usage_error("the spec has no experiment block; add one to use this command".into())
                }
            };
            let sizes = match sizes.as_deref().map(|s| parse_csv_u32("sizes", s)).transpose() {
                Ok(s) => s,
                Err(detail) => return reporter.usage_error(detail),
            };
            let out = match &common.out {
                Some(o) => o.clone(),
                None => return reporter.usage_error("experiment requires --out for its CSV tables".into()),
            };
            run_experiment(model, block, sizes, *seed, *reps, &out, guard)
        }
    };

    match outcome {
        Ok((payload, exit)) => {
            let report = RunReport {
                command: reporter.command,
                spec_digest: reporter.digest.clone().unwrap_or_default(),
                tool_version: TOOL_VERSION,
                wall_time_ms: start.elapsed().as_millis() as u64,
                payload,
            };
            if let Err(e) = emit(&report, json_out.as_deref()) {
                return reporter.usage_error(format!("cannot write report: {e}"));
            }
            exit
        }
        Err(err) => reporter.command_error(err),
    }
}
