//! Parameter inference and asymptotics on enumerable and sampled models.
//!
//! * [`fit_mle_exact`]: damped Newton on the exact statistic law, with hull
//!   membership screening so non-existent maximizers fail fast.
//! * [`gibbs_sample`] and [`fit_mle_mcmc`]: a systematic-scan Gibbs sampler
//!   and the stochastic Newton fitter built on it, for spaces past the
//!   enumeration guard.
//! * [`scaling_profile`]: log-partition growth across sizes, flagging the
//!   exactly-linear regime.
//! * [`rate_function`]: the Legendre transform of the shifted log-partition,
//!   from an exact table or any user-supplied handle.
//! * [`consistency_experiment`]: simulate-and-refit error decay, in both the
//!   independent-resample and the fixed-large-sample projection designs.
//!
//! Everything stochastic is a pure function of its inputs and a 64-bit seed.

mod experiment;
mod hull;
mod linalg;
mod mle;
mod rate;
mod sampler;
mod scaling;

pub use experiment::{
    consistency_experiment, ExperimentConfig, ExperimentResult, ExperimentVariant, ReplicateRow,
    VariantTable,
};
pub use hull::interior_face;
pub use mle::{fit_mle_exact, fit_mle_mcmc, fit_mle_to_mean, FitMethod, MleOptions, MleResult};
pub use rate::{rate_function, LogPartitionFn, RateFunctionEval, RateOptions};
pub use sampler::{gibbs_sample, GibbsSampler, SamplerConfig};
pub use scaling::{default_size_measure, scaling_profile, ScalingProfile, ScalingRow};
