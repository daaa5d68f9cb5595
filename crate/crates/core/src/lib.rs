//! Dynamic channel reservation for multi-class loss systems.
//!
//! A system of `N` identical channels is shared by `M` traffic classes,
//! class 0 being the highest priority. Under high load every class except
//! the lowest reserves a share of the `N - C` reservable channels in
//! proportion to its observed arrival rate, which turns into an occupancy
//! threshold above which lower classes are refused.
//!
//! * [`traffic`] holds the rate arithmetic: load classification, quotas,
//!   thresholds and the online inter-arrival rate estimator.
//! * [`markov`] solves the birth-death chain for frozen thresholds and
//!   reports per-class blocking and utilization, with Erlang B as the
//!   no-priority baseline.
//! * [`sim`] is a seeded discrete-event simulator of the full dynamic scheme.
//! * [`config`] and [`sweep`] drive load sweeps and write CSV tables.
//!
//! The analytic modules are generic over [`Scalar`] (`f32` or `f64`); the
//! aliases below fix the common `f64` instantiation.

pub mod config;
pub mod markov;
mod scalar;
pub mod sim;
pub mod sweep;
pub mod traffic;

pub use scalar::Scalar;

pub type SystemParamsF64 = traffic::SystemParams<f64>;
pub type SystemParamsF32 = traffic::SystemParams<f32>;
pub type RateVectorF64 = traffic::RateVector<f64>;
pub type RateVectorF32 = traffic::RateVector<f32>;
pub type ClassMixF64 = traffic::ClassMix<f64>;
pub type ThresholdVectorF64 = traffic::ThresholdVector<f64>;
pub type ThresholdVectorF32 = traffic::ThresholdVector<f32>;
pub type RateEstimatorF64 = traffic::RateEstimator<f64>;
pub type BirthDeathChainF64 = markov::BirthDeathChain<f64>;
pub type BirthDeathChainF32 = markov::BirthDeathChain<f32>;
pub type SteadyStateF64 = markov::SteadyStateDistribution<f64>;
pub type BlockingReportF64 = markov::BlockingReport<f64>;
pub type BlockingReportF32 = markov::BlockingReport<f32>;
