//! Shared domain types: prompts, attack categories, feature vectors, weight
//! and threshold tables, pattern sets, and detection results.

mod category;
mod latency;
mod patterns;
mod prompt;
mod result;
mod vector;
mod weights;

pub use category::{AttackCategory, FeatureId, UnknownCategory, UnknownFeature};
pub use latency::{Stage, StageLatency, StageTimer};
pub use patterns::{MatchMode, PatternError, PatternSet, PatternSpec};
pub use prompt::{tokenize, Prompt};
pub use result::{DetectionResult, Evidence, Layer, ResultFlags};
pub use vector::{FeatureVector, FeatureVectorError};
pub use weights::{ThresholdError, ThresholdTable, WeightError, WeightMatrix};
