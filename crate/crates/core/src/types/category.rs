use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Attack taxonomy plus the `Benign` outcome.
///
/// Declaration order doubles as the tie-break order when two categories score
/// identically: the earlier variant wins. Keep new variants after the existing
/// attacks and before `Benign`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttackCategory {
    RoleImpersonation,
    LogicSubversion,
    Obfuscation,
    PrivilegeEscalation,
    SocialEngineering,
    DataExfiltration,
    Benign,
}

impl AttackCategory {
    /// Attack variants only, in tie-break order. `Benign` is an outcome, not a
    /// scoreable category, so it is excluded.
    pub const ATTACKS: [AttackCategory; 6] = [
        AttackCategory::RoleImpersonation,
        AttackCategory::LogicSubversion,
        AttackCategory::Obfuscation,
        AttackCategory::PrivilegeEscalation,
        AttackCategory::SocialEngineering,
        AttackCategory::DataExfiltration,
    ];

    /// All variants including `Benign`, in declaration order.
    pub const ALL: [AttackCategory; 7] = [
        AttackCategory::RoleImpersonation,
        AttackCategory::LogicSubversion,
        AttackCategory::Obfuscation,
        AttackCategory::PrivilegeEscalation,
        AttackCategory::SocialEngineering,
        AttackCategory::DataExfiltration,
        AttackCategory::Benign,
    ];

    pub fn is_attack(self) -> bool {
        self != AttackCategory::Benign
    }

    /// Stable snake_case name, matching the serialized form.
    pub fn name(self) -> &'static str {
        match self {
            AttackCategory::RoleImpersonation => "role_impersonation",
            AttackCategory::LogicSubversion => "logic_subversion",
            AttackCategory::Obfuscation => "obfuscation",
            AttackCategory::PrivilegeEscalation => "privilege_escalation",
            AttackCategory::SocialEngineering => "social_engineering",
            AttackCategory::DataExfiltration => "data_exfiltration",
            AttackCategory::Benign => "benign",
        }
    }

    /// Index into dense per-attack arrays. Panics for `Benign`, which is never
    /// a row in weight or threshold tables.
    pub(crate) fn attack_index(self) -> usize {
        assert!(self.is_attack(), "benign has no table row");
        self as usize
    }
}

impl fmt::Display for AttackCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("unknown category `{0}` (expected one of: role_impersonation, logic_subversion, obfuscation, privilege_escalation, social_engineering, data_exfiltration, benign)")]
pub struct UnknownCategory(pub String);

impl FromStr for AttackCategory {
    type Err = UnknownCategory;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        AttackCategory::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| UnknownCategory(s.to_owned()))
    }
}

/// The eight scored features. The short codes (`R`, `H`, ...) are the
/// canonical names used in configs, reports, and serialized output; the
/// variant names describe what each one measures.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum FeatureId {
    /// Embedding similarity to known role-impersonation prompts.
    #[serde(rename = "R")]
    RoleSimilarity,
    /// Density of hypothetical-framing language.
    #[serde(rename = "H")]
    HypotheticalDensity,
    /// Fraction of obfuscation techniques detected.
    #[serde(rename = "O")]
    ObfuscationRatio,
    /// Count of distinct privilege-escalation patterns present.
    #[serde(rename = "PE")]
    PrivilegeMarkers,
    /// Whether any multi-agent coordination pattern matched.
    #[serde(rename = "MA")]
    MultiAgentIndicator,
    /// Weighted density of framing used to smuggle requests past intent checks.
    #[serde(rename = "SB")]
    SemanticBypassDensity,
    /// Log-damped count of distinct urgency cues.
    #[serde(rename = "U")]
    UrgencyPressure,
    /// Count of distinct ethics-override phrasings present.
    #[serde(rename = "EV")]
    EthicsViolationMarkers,
}

impl FeatureId {
    pub const ALL: [FeatureId; 8] = [
        FeatureId::RoleSimilarity,
        FeatureId::HypotheticalDensity,
        FeatureId::ObfuscationRatio,
        FeatureId::PrivilegeMarkers,
        FeatureId::MultiAgentIndicator,
        FeatureId::SemanticBypassDensity,
        FeatureId::UrgencyPressure,
        FeatureId::EthicsViolationMarkers,
    ];

    /// Short code used in configs and reports.
    pub fn code(self) -> &'static str {
        match self {
            FeatureId::RoleSimilarity => "R",
            FeatureId::HypotheticalDensity => "H",
            FeatureId::ObfuscationRatio => "O",
            FeatureId::PrivilegeMarkers => "PE",
            FeatureId::MultiAgentIndicator => "MA",
            FeatureId::SemanticBypassDensity => "SB",
            FeatureId::UrgencyPressure => "U",
            FeatureId::EthicsViolationMarkers => "EV",
        }
    }

    pub(crate) fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for FeatureId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("unknown feature `{0}` (expected one of: R, H, O, PE, MA, SB, U, EV)")]
pub struct UnknownFeature(pub String);

impl FromStr for FeatureId {
    type Err = UnknownFeature;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        FeatureId::ALL
            .into_iter()
            .find(|f| f.code() == s)
            .ok_or_else(|| UnknownFeature(s.to_owned()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn category_roundtrip_through_name() {
        for cat in AttackCategory::ALL {
            assert_eq!(cat.name().parse::<AttackCategory>().unwrap(), cat);
        }
        assert!("prompt_injection".parse::<AttackCategory>().is_err());
    }

    #[test]
    fn category_order_is_tie_break_order() {
        // Earlier variants compare smaller; argmax scans rely on this.
        assert!(AttackCategory::RoleImpersonation < AttackCategory::LogicSubversion);
        assert!(AttackCategory::DataExfiltration < AttackCategory::Benign);
        assert_eq!(AttackCategory::ATTACKS.len(), 6);
        assert!(AttackCategory::ATTACKS.iter().all(|c| c.is_attack()));
    }

    #[test]
    fn feature_codes_roundtrip() {
        for feat in FeatureId::ALL {
            assert_eq!(feat.code().parse::<FeatureId>().unwrap(), feat);
        }
        assert!("X".parse::<FeatureId>().is_err());
    }

    #[test]
    fn serde_uses_snake_case_and_codes() {
        let json = serde_json::to_string(&AttackCategory::RoleImpersonation).unwrap();
        assert_eq!(json, "\"role_impersonation\"");
        let json = serde_json::to_string(&FeatureId::EthicsViolationMarkers).unwrap();
        assert_eq!(json, "\"EV\"");
        let back: FeatureId = serde_json::from_str("\"PE\"").unwrap();
        assert_eq!(back, FeatureId::PrivilegeMarkers);
    }
}
