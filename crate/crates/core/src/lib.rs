//! Repeat-consumption analysis and next-day recommendation for food diaries.
//!
//! The crate covers the full batch pipeline:
//!
//! * [`ingest`]: diary parsing, cleaning rules and p-core filtering;
//! * [`repeat`]: windowed repeat fractions per user, day, meal and group;
//! * [`stats`]: Kruskal-Wallis H and Dunn's pairwise tests;
//! * [`models`]: the exploration/exploitation mixture, its time-decayed
//!   variant, EM fitting, decay tuning and the popularity baselines;
//! * [`eval`]: sliding-window sessions, top-N metrics and aggregation;
//! * [`synth`]: logs drawn from a known mixture;
//! * [`oracle`]: brute-force reference implementations used by the tests;
//! * [`report`]: deterministic text reports.
//!
//! Numeric code is generic over [`Scalar`] (`f32` or `f64`); the aliases at
//! the crate root fix it to one of the two.

pub mod eval;
pub mod ids;
pub mod ingest;
pub mod models;
pub mod oracle;
pub mod repeat;
pub mod report;
pub mod scalar;
pub mod selftest;
pub mod stats;
pub mod synth;

pub use ids::{ItemId, UserId};
pub use scalar::Scalar;

pub type CountStats64 = models::CountStats<f64>;
pub type CountStats32 = models::CountStats<f32>;
pub type MixtureParams64 = models::MixtureParams<f64>;
pub type MixtureParams32 = models::MixtureParams<f32>;
pub type RepeatStats64 = repeat::RepeatStats<f64>;
pub type RepeatStats32 = repeat::RepeatStats<f32>;
pub type TestResult64 = stats::TestResult<f64>;
pub type TestResult32 = stats::TestResult<f32>;
pub type MetricRecord64 = eval::MetricRecord<f64>;
pub type EvalConfig64 = eval::EvalConfig<f64>;
