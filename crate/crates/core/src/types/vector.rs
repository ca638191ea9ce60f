use std::collections::BTreeMap;
use std::fmt;

use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use super::category::FeatureId;

/// A complete assignment of scores to all eight features.
///
/// Stored densely and indexed by [`FeatureId`], so a vector can never be
/// missing a feature. Serialization uses a map keyed by feature code
/// (`{"R": 0.82, "H": 0.0, ...}`) and deserialization rejects maps that omit
/// any feature or contain a non-finite score.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeatureVector {
    scores: [f64; 8],
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FeatureVectorError {
    #[error("feature {0} is missing")]
    Missing(FeatureId),
    #[error("feature {feature} is {value}, outside its valid range {range}")]
    OutOfRange {
        feature: FeatureId,
        value: f64,
        range: &'static str,
    },
    #[error("feature {0} is not finite")]
    NonFinite(FeatureId),
}

impl FeatureVector {
    pub fn zeros() -> Self {
        FeatureVector { scores: [0.0; 8] }
    }

    /// Builds a vector from explicit per-feature scores and checks the
    /// per-feature invariants (see [`FeatureVector::validate`]).
    pub fn new(scores: [f64; 8]) -> Result<Self, FeatureVectorError> {
        let v = FeatureVector { scores };
        v.validate()?;
        Ok(v)
    }

    /// Builds a vector without range checks. Only for synthesizing test
    /// inputs that deliberately sit outside feature ranges.
    pub fn from_raw(scores: [f64; 8]) -> Self {
        FeatureVector { scores }
    }

    pub fn get(&self, feature: FeatureId) -> f64 {
        self.scores[feature.index()]
    }

    pub fn set(&mut self, feature: FeatureId, value: f64) {
        self.scores[feature.index()] = value;
    }

    pub fn iter(&self) -> impl Iterator<Item = (FeatureId, f64)> + '_ {
        FeatureId::ALL.into_iter().map(move |f| (f, self.get(f)))
    }

    /// Checks every feature is finite and within its documented range:
    /// `R` in [-1, 1]; `O` in [0, 1]; `MA` exactly 0 or 1; `PE` and `EV`
    /// non-negative integers; `H`, `SB`, `U` non-negative.
    pub fn validate(&self) -> Result<(), FeatureVectorError> {
        for (feature, value) in self.iter() {
            if !value.is_finite() {
                return Err(FeatureVectorError::NonFinite(feature));
            }
            let range: &'static str = match feature {
                FeatureId::RoleSimilarity if !(-1.0..=1.0).contains(&value) => "[-1, 1]",
                FeatureId::ObfuscationRatio if !(0.0..=1.0).contains(&value) => "[0, 1]",
                FeatureId::MultiAgentIndicator if value != 0.0 && value != 1.0 => "{0, 1}",
                FeatureId::PrivilegeMarkers | FeatureId::EthicsViolationMarkers
                    if value < 0.0 || value.fract() != 0.0 =>
                {
                    "non-negative integers"
                }
                FeatureId::HypotheticalDensity
                | FeatureId::SemanticBypassDensity
                | FeatureId::UrgencyPressure
                    if value < 0.0 =>
                {
                    "[0, +inf)"
                }
                _ => continue,
            };
            return Err(FeatureVectorError::OutOfRange {
                feature,
                value,
                range,
            });
        }
        Ok(())
    }
}

impl fmt::Display for FeatureVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        for (feature, value) in self.iter() {
            if !first {
                f.write_str(" ")?;
            }
            write!(f, "{feature}={value:.4}")?;
            first = false;
        }
        Ok(())
    }
}

impl Serialize for FeatureVector {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let map: BTreeMap<FeatureId, f64> = self.iter().collect();
        map.serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for FeatureVector {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let map = BTreeMap::<FeatureId, f64>::deserialize(deserializer)?;
        let mut scores = [0.0; 8];
        for feature in FeatureId::ALL {
            let value = *map
                .get(&feature)
                .ok_or_else(|| D::Error::custom(FeatureVectorError::Missing(feature)))?;
            if !value.is_finite() {
                return Err(D::Error::custom(FeatureVectorError::NonFinite(feature)));
            }
            scores[feature.index()] = value;
        }
        Ok(FeatureVector { scores })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn get_set_roundtrip() {
        let mut v = FeatureVector::zeros();
        v.set(FeatureId::EthicsViolationMarkers, 2.0);
        v.set(FeatureId::RoleSimilarity, 0.95);
        assert_eq!(v.get(FeatureId::EthicsViolationMarkers), 2.0);
        assert_eq!(v.get(FeatureId::HypotheticalDensity), 0.0);
        v.validate().unwrap();
    }

    #[test]
    fn validate_rejects_out_of_range() {
        let mut v = FeatureVector::zeros();
        v.set(FeatureId::ObfuscationRatio, 1.5);
        assert!(matches!(
            v.validate(),
            Err(FeatureVectorError::OutOfRange { feature: FeatureId::ObfuscationRatio, .. })
        ));

        let mut v = FeatureVector::zeros();
        v.set(FeatureId::MultiAgentIndicator, 0.5);
        assert!(v.validate().is_err());

        let mut v = FeatureVector::zeros();
        v.set(FeatureId::PrivilegeMarkers, 1.5);
        assert!(v.validate().is_err());

        let mut v = FeatureVector::zeros();
        v.set(FeatureId::UrgencyPressure, f64::NAN);
        assert!(matches!(v.validate(), Err(FeatureVectorError::NonFinite(_))));
    }

    #[test]
    fn serde_requires_all_eight_features() {
        let v = FeatureVector::new([0.9, 0.1, 1.0 / 3.0, 2.0, 1.0, 0.05, 0.693, 2.0]).unwrap();
        let json = serde_json::to_string(&v).unwrap();
        let back: FeatureVector = serde_json::from_str(&json).unwrap();
        assert_eq!(back, v);

        // Map form is keyed by feature code.
        assert!(json.contains("\"EV\""));

        // Dropping a key must fail, not default to zero.
        let partial = r#"{"R":0.9,"H":0.1,"O":0.3,"PE":2.0,"MA":1.0,"SB":0.05,"U":0.693}"#;
        let err = serde_json::from_str::<FeatureVector>(partial).unwrap_err();
        assert!(err.to_string().contains("EV"));
    }
}
