//! The feedback loop: flag low-margin verdicts for human review and roll the
//! outcomes into new configuration versions without rebuilding anything by
//! hand.
//!
//! Two pieces work together. [`ReviewQueue`] is a bounded buffer of the most
//! uncertain screenings, where [`uncertainty`] maps a result's category
//! scores to a single priority (1.0 exactly on a decision threshold, decaying
//! as scores move away from every cut line). [`ConfigStore`] is an
//! append-only directory of numbered config versions with an `ACTIVE` marker:
//! reviewed items become [`ConfigMutation`]s, a mutation batch is staged as a
//! new self-contained version, validated by actually compiling an engine from
//! it, and then activated — or rolled back — by rewriting one marker file.

mod queue;
mod store;

pub use queue::{Admission, ReviewItem, ReviewQueue, ReviewStatus};
pub use store::{
    apply_feedback, feedback_mutation, ConfigMutation, ConfigStore, FeedbackTarget, PATTERN_SLOTS,
};

use std::collections::BTreeMap;

use thiserror::Error;

use crate::engine::ConfigError;
use crate::semantic::SemanticError;
use crate::types::{AttackCategory, PatternError, ThresholdTable};

#[derive(Debug, Error)]
pub enum AdaptiveError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path} line {line}: {source}")]
    Jsonl {
        path: String,
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error("uncertainty {0} is not a finite value in [0, 1]")]
    BadUncertainty(f64),
    #[error("no queued item with sequence {sequence}")]
    NotFound { sequence: u64 },
    #[error("review item {sequence} is not labeled; label it before applying feedback")]
    NotLabeled { sequence: u64 },
    #[error("review item {sequence} is labeled benign; benign feedback does not extend attack patterns or references")]
    BenignFeedback { sequence: u64 },
    #[error("saved queue item {sequence} is not pending (resolved items leave the queue)")]
    NonPending { sequence: u64 },
    #[error("saved queue repeats sequence {sequence}")]
    DuplicateSequence { sequence: u64 },
    #[error("saved queue holds {count} items, over the capacity of {capacity}")]
    CapacityExceeded { count: usize, capacity: usize },
    #[error("config store at {root} is already initialized")]
    AlreadyInitialized { root: String },
    #[error("{root} is not a config store (no ACTIVE marker); initialize it first")]
    NotInitialized { root: String },
    #[error("config store has no version {version}")]
    UnknownVersion { version: u32 },
    #[error("active version v{active} is the oldest; nothing to roll back to")]
    NoOlderVersion { active: u32 },
    #[error("unknown pattern set `{set}` (expected one of: hypothetical, obfuscation, privilege, multi_agent, bypass, urgency, ethics)")]
    UnknownPatternSet { set: String },
    #[error("{path}: ACTIVE marker `{marker}` is not a version name")]
    CorruptActive { path: String, marker: String },
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Semantic(#[from] SemanticError),
    #[error(transparent)]
    Pattern(#[from] PatternError),
}

/// How close a screening came to flipping its verdict.
///
/// For each enabled category, the distance of the composite score from that
/// category's own threshold is mapped through `exp(-distance / scale)`, and
/// the maximum over categories is returned: 1.0 for a score exactly on a cut
/// line, dropping by a factor of e per `scale` of distance. An empty score
/// map (every category disabled) yields 0.0 — nothing could have flipped.
/// Entries for categories without a threshold are ignored.
pub fn uncertainty(
    scores: &BTreeMap<AttackCategory, f64>,
    thresholds: &ThresholdTable,
    scale: f64,
) -> f64 {
    assert!(
        scale.is_finite() && scale > 0.0,
        "uncertainty scale must be positive"
    );
    let mut nearest = 0.0f64;
    for (&category, &score) in scores {
        let Some(threshold) = thresholds.get(category) else {
            continue;
        };
        let u = (-(score - threshold).abs() / scale).exp();
        if u > nearest {
            nearest = u;
        }
    }
    nearest
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::AttackCategory::*;

    fn defaults() -> ThresholdTable {
        ThresholdTable::default()
    }

    #[test]
    fn score_on_a_threshold_is_fully_uncertain() {
        let mut scores = BTreeMap::new();
        scores.insert(Obfuscation, 0.30);
        assert_eq!(uncertainty(&scores, &defaults(), 0.1), 1.0);
    }

    #[test]
    fn uncertainty_decays_exponentially_with_distance() {
        // One and two scale units from the obfuscation threshold of 0.30.
        let mut scores = BTreeMap::new();
        scores.insert(Obfuscation, 0.40);
        assert!((uncertainty(&scores, &defaults(), 0.1) - 0.36787944117144233).abs() < 1e-15);
        scores.insert(Obfuscation, 0.10);
        assert!((uncertainty(&scores, &defaults(), 0.1) - 0.1353352832366127).abs() < 1e-15);
        // Direction is irrelevant; only distance counts.
        scores.insert(Obfuscation, 0.20);
        assert!((uncertainty(&scores, &defaults(), 0.1) - 0.36787944117144233).abs() < 1e-15);
    }

    #[test]
    fn the_category_nearest_its_threshold_wins() {
        let mut scores = BTreeMap::new();
        scores.insert(RoleImpersonation, 0.05); // 0.60 from its 0.65 line
        scores.insert(SocialEngineering, 0.21); // 0.01 from its 0.20 line
        let got = uncertainty(&scores, &defaults(), 0.1);
        assert!((got - (-0.1f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn no_enabled_categories_means_no_uncertainty() {
        assert_eq!(uncertainty(&BTreeMap::new(), &defaults(), 0.1), 0.0);

        // Entries without a threshold are skipped, not scored against zero.
        let mut scores = BTreeMap::new();
        scores.insert(DataExfiltration, 0.0);
        assert_eq!(uncertainty(&scores, &defaults(), 0.1), 0.0);
    }

    #[test]
    fn wider_scales_keep_distant_scores_uncertain_longer() {
        let mut scores = BTreeMap::new();
        scores.insert(PrivilegeEscalation, 0.95); // 0.70 above its 0.25 line
        let narrow = uncertainty(&scores, &defaults(), 0.05);
        let wide = uncertainty(&scores, &defaults(), 0.5);
        assert!(narrow < wide);
        assert!(narrow > 0.0 && wide < 1.0);
    }
}
