use std::collections::BTreeMap;

use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use super::category::{AttackCategory, FeatureId};

/// Per-category feature weights: one row per attack category, one column per
/// feature. Every cell is validated into [0, 1] at construction. `Benign` has
/// no row — it is the fall-through verdict, not a scored category.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightMatrix {
    rows: [[f64; 8]; 6],
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum WeightError {
    #[error("weight for {category}/{feature} is {value}, outside [0, 1]")]
    OutOfRange {
        category: AttackCategory,
        feature: FeatureId,
        value: f64,
    },
    #[error("weight rows may only cover attack categories, not benign")]
    BenignRow,
}

impl WeightMatrix {
    /// All-zero matrix; useful as a base for sparse construction.
    pub fn zeros() -> Self {
        WeightMatrix { rows: [[0.0; 8]; 6] }
    }

    /// Builds a matrix from a sparse cell map. Unmentioned cells are zero.
    pub fn from_cells(
        cells: impl IntoIterator<Item = ((AttackCategory, FeatureId), f64)>,
    ) -> Result<Self, WeightError> {
        let mut m = WeightMatrix::zeros();
        for ((category, feature), value) in cells {
            if !category.is_attack() {
                return Err(WeightError::BenignRow);
            }
            if !value.is_finite() || !(0.0..=1.0).contains(&value) {
                return Err(WeightError::OutOfRange {
                    category,
                    feature,
                    value,
                });
            }
            m.rows[category.attack_index()][feature.index()] = value;
        }
        Ok(m)
    }

    /// Builds a matrix without the [0, 1] cell check. Exists so scale-law
    /// tests can construct matrices with cells above 1; everything else goes
    /// through [`WeightMatrix::from_cells`].
    pub fn from_rows_unchecked(rows: [[f64; 8]; 6]) -> Self {
        WeightMatrix { rows }
    }

    pub fn get(&self, category: AttackCategory, feature: FeatureId) -> f64 {
        assert!(category.is_attack(), "benign has no weight row");
        self.rows[category.attack_index()][feature.index()]
    }

    /// Returns a copy with one cell replaced (validated).
    pub fn with_cell(
        &self,
        category: AttackCategory,
        feature: FeatureId,
        value: f64,
    ) -> Result<Self, WeightError> {
        if !category.is_attack() {
            return Err(WeightError::BenignRow);
        }
        if !value.is_finite() || !(0.0..=1.0).contains(&value) {
            return Err(WeightError::OutOfRange {
                category,
                feature,
                value,
            });
        }
        let mut m = *self;
        m.rows[category.attack_index()][feature.index()] = value;
        Ok(m)
    }

    /// Iterates all 48 cells in (category, feature) declaration order.
    pub fn cells(&self) -> impl Iterator<Item = (AttackCategory, FeatureId, f64)> + '_ {
        AttackCategory::ATTACKS.into_iter().flat_map(move |c| {
            FeatureId::ALL
                .into_iter()
                .map(move |f| (c, f, self.get(c, f)))
        })
    }

    /// Cells with non-zero weight, i.e. the support of the matrix.
    pub fn non_zero_cells(&self) -> Vec<(AttackCategory, FeatureId, f64)> {
        self.cells().filter(|(_, _, w)| *w != 0.0).collect()
    }
}

/// Shipped default weights. Five categories have live rows; data exfiltration
/// ships all-zero (no reliable feature yet) and stays disabled until a
/// deployment assigns it weights and a threshold.
impl Default for WeightMatrix {
    fn default() -> Self {
        use AttackCategory::*;
        use FeatureId::*;
        WeightMatrix::from_cells([
            ((RoleImpersonation, RoleSimilarity), 0.70),
            ((RoleImpersonation, EthicsViolationMarkers), 0.30),
            ((LogicSubversion, HypotheticalDensity), 0.50),
            ((LogicSubversion, MultiAgentIndicator), 0.20),
            ((LogicSubversion, SemanticBypassDensity), 0.30),
            ((Obfuscation, ObfuscationRatio), 1.0),
            ((PrivilegeEscalation, PrivilegeMarkers), 1.0),
            ((SocialEngineering, UrgencyPressure), 1.0),
        ])
        .expect("default weights are in range")
    }
}

impl Serialize for WeightMatrix {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        // Dense nested maps: every row and column explicit, so the serialized
        // form is self-describing and diffs cleanly.
        let mut outer: BTreeMap<AttackCategory, BTreeMap<FeatureId, f64>> = BTreeMap::new();
        for (category, feature, value) in self.cells() {
            outer.entry(category).or_default().insert(feature, value);
        }
        outer.serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for WeightMatrix {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        // Sparse maps are accepted: missing rows or cells mean zero.
        let outer = BTreeMap::<AttackCategory, BTreeMap<FeatureId, f64>>::deserialize(deserializer)?;
        let cells = outer.into_iter().flat_map(|(category, row)| {
            row.into_iter()
                .map(move |(feature, value)| ((category, feature), value))
        });
        WeightMatrix::from_cells(cells).map_err(D::Error::custom)
    }
}

/// Per-category decision thresholds. A category without an entry is disabled:
/// it is never scored and can never be a verdict.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThresholdTable {
    taus: [Option<f64>; 6],
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ThresholdError {
    #[error("threshold for {category} is {value}; thresholds must be finite and >= 0")]
    Invalid { category: AttackCategory, value: f64 },
    #[error("benign cannot have a threshold")]
    BenignRow,
}

impl ThresholdTable {
    /// Builds a table from explicit per-category thresholds. Categories not
    /// mentioned are disabled.
    pub fn from_entries(
        entries: impl IntoIterator<Item = (AttackCategory, f64)>,
    ) -> Result<Self, ThresholdError> {
        let mut taus = [None; 6];
        for (category, value) in entries {
            if !category.is_attack() {
                return Err(ThresholdError::BenignRow);
            }
            if !value.is_finite() || value < 0.0 {
                return Err(ThresholdError::Invalid { category, value });
            }
            taus[category.attack_index()] = Some(value);
        }
        Ok(ThresholdTable { taus })
    }

    pub fn get(&self, category: AttackCategory) -> Option<f64> {
        if !category.is_attack() {
            return None;
        }
        self.taus[category.attack_index()]
    }

    /// Enabled categories in declaration (tie-break) order.
    pub fn enabled(&self) -> impl Iterator<Item = (AttackCategory, f64)> + '_ {
        AttackCategory::ATTACKS
            .into_iter()
            .filter_map(move |c| self.get(c).map(|t| (c, t)))
    }

    pub fn is_enabled(&self, category: AttackCategory) -> bool {
        self.get(category).is_some()
    }
}

/// Shipped default thresholds. Data exfiltration has none, matching its
/// all-zero weight row.
impl Default for ThresholdTable {
    fn default() -> Self {
        use AttackCategory::*;
        ThresholdTable::from_entries([
            (RoleImpersonation, 0.65),
            (LogicSubversion, 0.45),
            (Obfuscation, 0.30),
            (PrivilegeEscalation, 0.25),
            (SocialEngineering, 0.20),
        ])
        .expect("default thresholds are valid")
    }
}

impl Serialize for ThresholdTable {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let map: BTreeMap<AttackCategory, f64> = self.enabled().collect();
        map.serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for ThresholdTable {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let map = BTreeMap::<AttackCategory, f64>::deserialize(deserializer)?;
        ThresholdTable::from_entries(map).map_err(D::Error::custom)
    }
}
