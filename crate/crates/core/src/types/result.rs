use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::category::AttackCategory;
use super::latency::StageLatency;
use super::vector::FeatureVector;

/// Which detection layer produced a piece of evidence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Layer {
    Signature,
    Pattern,
    Semantic,
    Behavioral,
}

/// One concrete reason the engine scored something: a fired pattern or
/// signature (with the byte span of its first match) or the closest reference
/// prompt from the semantic layer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Evidence {
    pub layer: Layer,
    /// Pattern id (`set/n`), signature id, or reference prompt id.
    pub source: String,
    /// Byte range of the first match in the sanitized input, when applicable.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub span: Option<(usize, usize)>,
}

/// Degradation and override markers attached to a result.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ResultFlags {
    /// Input had no tokens (or a zero-information embedding); normalized
    /// features were defined to zero instead of dividing by zero.
    pub degenerate_input: bool,
    /// The semantic layer failed at runtime; `R` was scored 0 and the verdict
    /// rests on pattern features alone.
    pub semantic_degraded: bool,
    /// The behavioral layer failed or returned an out-of-range score and was
    /// ignored.
    pub behavioral_degraded: bool,
    /// The behavioral layer crossed its veto cutoff; the verdict was forced
    /// away from benign.
    pub behavioral_veto: bool,
}

/// The engine's full answer for one prompt.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionResult {
    pub verdict: AttackCategory,
    /// Composite threat score per enabled category. Disabled categories are
    /// absent, so iteration order (BTreeMap over the category enum) matches
    /// tie-break order.
    pub category_scores: BTreeMap<AttackCategory, f64>,
    pub features: FeatureVector,
    pub evidence: Vec<Evidence>,
    pub flags: ResultFlags,
    pub latency: StageLatency,
}

impl DetectionResult {
    pub fn is_attack(&self) -> bool {
        self.verdict.is_attack()
    }

    /// Score of the verdict category, if the verdict is an enabled attack.
    pub fn verdict_score(&self) -> Option<f64> {
        self.category_scores.get(&self.verdict).copied()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::FeatureId;

    fn sample() -> DetectionResult {
        let mut features = FeatureVector::zeros();
        features.set(FeatureId::RoleSimilarity, 1.0);
        features.set(FeatureId::EthicsViolationMarkers, 2.0);
        let mut category_scores = BTreeMap::new();
        category_scores.insert(AttackCategory::RoleImpersonation, 1.3);
        category_scores.insert(AttackCategory::SocialEngineering, 0.0);
        DetectionResult {
            verdict: AttackCategory::RoleImpersonation,
            category_scores,
            features,
            evidence: vec![Evidence {
                layer: Layer::Pattern,
                source: "ethics/1".to_owned(),
                span: Some((7, 19)),
            }],
            flags: ResultFlags::default(),
            latency: StageLatency::default(),
        }
    }

    #[test]
    fn verdict_helpers() {
        let r = sample();
        assert!(r.is_attack());
        assert_eq!(r.verdict_score(), Some(1.3));

        let mut benign = sample();
        benign.verdict = AttackCategory::Benign;
        assert!(!benign.is_attack());
        assert_eq!(benign.verdict_score(), None);
    }

    #[test]
    fn serde_roundtrip_preserves_scores_and_evidence() {
        let r = sample();
        let json = serde_json::to_string(&r).unwrap();
        let back: DetectionResult = serde_json::from_str(&json).unwrap();
        assert_eq!(back, r);
        // Scores serialize keyed by category name, in declaration order.
        assert!(json.contains("\"role_impersonation\":1.3"));
        let scores_pos = json.find("role_impersonation\":1.3").unwrap();
        let social_pos = json.find("social_engineering").unwrap();
        assert!(scores_pos < social_pos);
    }
}
