//! Distributional actor-critic laboratory.
//!
//! Quantile critics with multi-sample target values and UCB exploration,
//! alongside the SAC and single-sample IQN baselines, exact tabular
//! distributional dynamic programming, toy continuous-control environments
//! and the return-distribution matching study.
//!
//! The numeric core is generic over [`Scalar`]; the aliases below fix it to
//! `f64`, which is what the trainer and the CLI run on.

pub mod actor;
pub mod checks;
pub mod distmath;
pub mod dporacle;
pub mod envs;
pub mod error;
pub mod evalkit;
pub mod explore;
pub mod nnkit;
pub mod scalar;
pub mod targets;
pub mod trainer;
pub mod znet;

pub use error::{Error, Result};
pub use scalar::Scalar;

/// Seeded stream used everywhere randomness is consumed.
pub type Rng = rand_chacha::ChaCha8Rng;

pub type Tensor = nnkit::Tensor<f64>;
pub type Mlp = nnkit::Mlp<f64>;
pub type Adam = nnkit::Adam<f64>;
pub type EmpiricalDistribution = distmath::EmpiricalDistribution<f64>;
pub type QuantileFractions = distmath::QuantileFractions<f64>;
pub type ZNetwork = znet::ZNetwork<f64>;
pub type TwinZ = znet::TwinZ<f64>;
pub type TwinQ = znet::TwinQ<f64>;
pub type GaussianPolicy = actor::GaussianPolicy<f64>;
pub type EntropyTemp = actor::EntropyTemp<f64>;
pub type CriticHyper = targets::CriticHyper<f64>;

pub use envs::Env;
pub use trainer::{train, TrainConfig, Variant};
