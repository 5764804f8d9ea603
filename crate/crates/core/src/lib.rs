//! Mobility-aware asynchronous federated learning for proactive edge caching
//! in vehicular networks.
//!
//! The crate simulates vehicles passing a roadside unit (RSU), trains a
//! rating autoencoder across them with asynchronous or synchronous federated
//! aggregation, predicts popular contents from the trained model, and
//! measures the resulting cache efficiency against bandit-style baselines.

// Validation writes `!(x > 0.0)` on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod autoencoder;
pub mod cache;
pub mod data;
pub mod error;
pub mod experiment;
pub mod fl;
pub mod mobility;
pub mod oracle;
pub mod popularity;
pub mod seed;
pub mod selftest;
pub mod synth;

pub use autoencoder::{Gradient, ModelParams};
pub use cache::{BanditFeedback, BanditState, CacheState, CacheStats, RequestCounts};
pub use data::{Corpus, LocalDataset, RatingMatrix, RatingRecord, UserPool, UserProfile};
pub use error::{Error, Result};
pub use experiment::{ExperimentConfig, ExperimentOutput, ResultRow, Scheme};
pub use fl::{AggregationMode, AsyncUpdate, RoundLog, TrainingConfig, TrainingOutcome};
pub use mobility::{CoverageGeometry, Fleet, VehicleState, VelocityDistribution};
pub use popularity::{PopularityReport, ProfileMatrix};
pub use synth::SynthConfig;
