//! GAN-assisted training-data synthesis for imbalanced multiclass intrusion
//! detection.
//!
//! A controller loop finds labels the detector handles poorly, trains a small
//! GAN on each, and keeps the generated rows only when retraining on them
//! improves validation F1 for that label without hurting macro-F1.

pub mod controller;
pub mod data;
pub mod detector;
pub mod error;
pub mod experiment;
pub mod metrics;
pub mod neural;
pub mod pipeline;
pub mod store;
pub mod synthesizer;
pub mod textfmt;

pub use controller::{Controller, ControllerConfig, RoundLog, Verdict};
pub use data::LabeledMatrix;
pub use detector::{train_ids, IdsModel};
pub use error::{Error, ErrorKind, Result};
pub use metrics::MetricsReport;
pub use neural::TrainConfig;
pub use store::{Flag, FlagSet, SampleStore};
pub use synthesizer::GanConfig;

/// Mixes `parts` into `base` with splitmix64 so that derived streams are
/// independent of each other and of the base seed.
pub fn derive_seed(base: u64, parts: &[u64]) -> u64 {
    fn mix(mut z: u64) -> u64 {
        z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^ (z >> 31)
    }
    parts.iter().fold(mix(base), |acc, &p| mix(acc ^ mix(p)))
}
