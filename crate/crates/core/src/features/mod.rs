//! The seven pattern-derived features and their shared scan pipeline.
//!
//! Each feature has a standalone scoring function that defines its semantics.
//! The engine's hot path uses [`recognize`] (one regex pass over all sets)
//! followed by [`PatternHits::features`] (pure arithmetic), which is required
//! to agree with the standalone functions; tests enforce that.

pub mod defaults;

use crate::types::{
    Evidence, FeatureVector, FeatureId, Layer, PatternError, PatternSet, Prompt,
};

/// The seven pattern sets, one per pattern feature, keyed by role.
#[derive(Debug, Clone)]
pub struct FeatureSets {
    pub hypothetical: PatternSet,
    pub obfuscation: PatternSet,
    pub privilege: PatternSet,
    pub multi_agent: PatternSet,
    pub bypass: PatternSet,
    pub urgency: PatternSet,
    pub ethics: PatternSet,
}

/// Validated feature configuration: the seven sets plus the role-separator
/// gate. Construction fails if the bypass set has unweighted patterns, so a
/// missing `w=` flag is a load-time error rather than a scoring-time panic.
#[derive(Debug, Clone)]
pub struct FeatureConfig {
    hypothetical: PatternSet,
    obfuscation: PatternSet,
    privilege: PatternSet,
    /// The multi-agent set as configured, before the separator gate.
    multi_agent_full: PatternSet,
    /// The set actually scanned: `multi_agent_full` minus the builtin
    /// role-separator patterns when the gate is off.
    multi_agent: PatternSet,
    bypass: PatternSet,
    urgency: PatternSet,
    ethics: PatternSet,
    role_separator: bool,
}

impl FeatureConfig {
    pub fn new(sets: FeatureSets, multi_agent_role_separator: bool) -> Result<Self, PatternError> {
        sets.bypass.require_weights()?;
        let multi_agent = if multi_agent_role_separator {
            sets.multi_agent.clone()
        } else {
            let kept: Vec<_> = sets
                .multi_agent
                .patterns()
                .iter()
                .filter(|p| !defaults::ROLE_SEPARATOR_IDS.contains(&p.id()))
                .cloned()
                .collect();
            PatternSet::new(sets.multi_agent.id().to_owned(), kept)?
        };
        Ok(FeatureConfig {
            hypothetical: sets.hypothetical,
            obfuscation: sets.obfuscation,
            privilege: sets.privilege,
            multi_agent_full: sets.multi_agent,
            multi_agent,
            bypass: sets.bypass,
            urgency: sets.urgency,
            ethics: sets.ethics,
            role_separator: multi_agent_role_separator,
        })
    }

    /// Builtin sets with the role-separator gate in the given position.
    pub fn builtin(multi_agent_role_separator: bool) -> Self {
        FeatureConfig::new(defaults::builtin_sets(), multi_agent_role_separator)
            .expect("builtin sets are valid")
    }

    pub fn hypothetical(&self) -> &PatternSet {
        &self.hypothetical
    }

    pub fn obfuscation(&self) -> &PatternSet {
        &self.obfuscation
    }

    pub fn privilege(&self) -> &PatternSet {
        &self.privilege
    }

    /// The effective multi-agent set (separator patterns removed if gated off).
    pub fn multi_agent(&self) -> &PatternSet {
        &self.multi_agent
    }

    /// The multi-agent set as configured, ignoring the gate. Used when
    /// re-serializing configuration.
    pub fn multi_agent_full(&self) -> &PatternSet {
        &self.multi_agent_full
    }

    pub fn bypass(&self) -> &PatternSet {
        &self.bypass
    }

    pub fn urgency(&self) -> &PatternSet {
        &self.urgency
    }

    pub fn ethics(&self) -> &PatternSet {
        &self.ethics
    }

    pub fn multi_agent_role_separator(&self) -> bool {
        self.role_separator
    }

    /// Sets in scan order with the feature each one feeds.
    fn scan_plan(&self) -> [(FeatureId, &PatternSet); 7] {
        [
            (FeatureId::HypotheticalDensity, &self.hypothetical),
            (FeatureId::ObfuscationRatio, &self.obfuscation),
            (FeatureId::PrivilegeMarkers, &self.privilege),
            (FeatureId::MultiAgentIndicator, &self.multi_agent),
            (FeatureId::SemanticBypassDensity, &self.bypass),
            (FeatureId::UrgencyPressure, &self.urgency),
            (FeatureId::EthicsViolationMarkers, &self.ethics),
        ]
    }
}

impl Default for FeatureConfig {
    fn default() -> Self {
        FeatureConfig::builtin(true)
    }
}

/// Hypothetical-language density `H`: total marker matches (non-overlapping,
/// across all patterns) divided by token count. Zero for token-free prompts.
pub fn hypothetical_score(prompt: &Prompt, markers: &PatternSet) -> f64 {
    if prompt.is_degenerate() {
        return 0.0;
    }
    let matches: usize = markers
        .patterns()
        .iter()
        .map(|p| p.count_matches(prompt.text()))
        .sum();
    matches as f64 / prompt.token_count() as f64
}

/// Obfuscation ratio `O`: fraction of technique detectors that fire. Each
/// detector is binary, so with the three shipped detectors the score is one
/// of {0, 1/3, 2/3, 1}.
pub fn obfuscation_score(prompt: &Prompt, detectors: &PatternSet) -> f64 {
    let fired = detectors
        .patterns()
        .iter()
        .filter(|p| p.is_present(prompt.text()))
        .count();
    fired as f64 / detectors.len() as f64
}

/// Privilege-escalation markers `PE`: number of distinct patterns present.
/// Repeated matches of one pattern count once.
pub fn privilege_escalation_score(prompt: &Prompt, patterns: &PatternSet) -> u32 {
    patterns
        .patterns()
        .iter()
        .filter(|p| p.is_present(prompt.text()))
        .count() as u32
}

/// Multi-agent indicator `MA`: true iff any coordination pattern matches.
pub fn multi_agent_score(prompt: &Prompt, patterns: &PatternSet) -> bool {
    patterns
        .patterns()
        .iter()
        .any(|p| p.is_present(prompt.text()))
}

/// Semantic-bypass density `SB`: sum over patterns of weight times
/// non-overlapping match count, divided by token count.
///
/// Panics if a pattern has no weight; [`FeatureConfig::new`] rejects such
/// sets, so this can only trip on a set that skipped validation.
pub fn semantic_bypass_score(prompt: &Prompt, patterns: &PatternSet) -> f64 {
    if prompt.is_degenerate() {
        return 0.0;
    }
    let weighted: f64 = patterns
        .patterns()
        .iter()
        .map(|p| {
            let w = p
                .weight()
                .expect("bypass sets are weight-validated at load time");
            w * p.count_matches(prompt.text()) as f64
        })
        .sum();
    weighted / prompt.token_count() as f64
}

/// Urgency pressure `U`: ln(1 + distinct urgency patterns present). The log
/// keeps stacked urgency cues from growing the score linearly.
pub fn urgency_score(prompt: &Prompt, patterns: &PatternSet) -> f64 {
    let distinct = patterns
        .patterns()
        .iter()
        .filter(|p| p.is_present(prompt.text()))
        .count();
    (1.0 + distinct as f64).ln()
}

/// Ethics-violation markers `EV`: number of distinct override phrasings
/// present. Integer-valued and unbounded by design.
pub fn ethics_violation_score(prompt: &Prompt, patterns: &PatternSet) -> u32 {
    patterns
        .patterns()
        .iter()
        .filter(|p| p.is_present(prompt.text()))
        .count() as u32
}

/// The seven pattern features for one prompt. `R` (semantic similarity) is
/// not here; it joins in [`PatternFeatures::into_vector`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PatternFeatures {
    pub hypothetical: f64,
    pub obfuscation: f64,
    pub privilege: u32,
    pub multi_agent: bool,
    pub semantic_bypass: f64,
    pub urgency: f64,
    pub ethics: u32,
    /// The prompt had no tokens; density features were defined to zero.
    pub degenerate: bool,
}

impl PatternFeatures {
    /// Widens the pattern features and a role-similarity score into the full
    /// eight-feature vector.
    pub fn into_vector(self, role_similarity: f64) -> FeatureVector {
        let mut v = FeatureVector::zeros();
        v.set(FeatureId::RoleSimilarity, role_similarity);
        v.set(FeatureId::HypotheticalDensity, self.hypothetical);
        v.set(FeatureId::ObfuscationRatio, self.obfuscation);
        v.set(FeatureId::PrivilegeMarkers, self.privilege as f64);
        v.set(
            FeatureId::MultiAgentIndicator,
            if self.multi_agent { 1.0 } else { 0.0 },
        );
        v.set(FeatureId::SemanticBypassDensity, self.semantic_bypass);
        v.set(FeatureId::UrgencyPressure, self.urgency);
        v.set(FeatureId::EthicsViolationMarkers, self.ethics as f64);
        v
    }
}

/// One fired pattern: where it first matched, how often, and its weight.
#[derive(Debug, Clone, PartialEq)]
pub struct Hit {
    pub pattern_id: String,
    pub weight: Option<f64>,
    pub count: usize,
    pub span: (usize, usize),
}

#[derive(Debug, Clone)]
struct SetHits {
    set_len: usize,
    hits: Vec<Hit>,
}

fn scan_set(text: &str, set: &PatternSet) -> SetHits {
    let mut hits = Vec::new();
    for p in set.patterns() {
        let count = p.count_matches(text);
        if count > 0 {
            let span = p.first_span(text).expect("count > 0 implies a first match");
            hits.push(Hit {
                pattern_id: p.id().to_owned(),
                weight: p.weight(),
                count,
                span,
            });
        }
    }
    SetHits {
        set_len: set.len(),
        hits,
    }
}

/// Raw scan output: which patterns fired, per feature. Splitting recognition
/// (regex work) from aggregation (arithmetic) lets the engine time the two
/// stages separately and reuse one scan for both scores and evidence.
#[derive(Debug, Clone)]
pub struct PatternHits {
    token_count: usize,
    sets: [(FeatureId, SetHits); 7],
}

/// Runs every configured pattern against the prompt once.
pub fn recognize(prompt: &Prompt, config: &FeatureConfig) -> PatternHits {
    let sets = config
        .scan_plan()
        .map(|(feature, set)| (feature, scan_set(prompt.text(), set)));
    PatternHits {
        token_count: prompt.token_count(),
        sets,
    }
}

impl PatternHits {
    fn set(&self, feature: FeatureId) -> &SetHits {
        &self
            .sets
            .iter()
            .find(|(f, _)| *f == feature)
            .expect("all pattern features are scanned")
            .1
    }

    /// Aggregates the scan into feature scores. Pure arithmetic; must agree
    /// with the standalone scoring functions.
    pub fn features(&self) -> PatternFeatures {
        let degenerate = self.token_count == 0;
        let tokens = self.token_count as f64;
        let h = self.set(FeatureId::HypotheticalDensity);
        let o = self.set(FeatureId::ObfuscationRatio);
        let pe = self.set(FeatureId::PrivilegeMarkers);
        let ma = self.set(FeatureId::MultiAgentIndicator);
        let sb = self.set(FeatureId::SemanticBypassDensity);
        let u = self.set(FeatureId::UrgencyPressure);
        let ev = self.set(FeatureId::EthicsViolationMarkers);

        let hypothetical = if degenerate {
            0.0
        } else {
            h.hits.iter().map(|h| h.count).sum::<usize>() as f64 / tokens
        };
        let semantic_bypass = if degenerate {
            0.0
        } else {
            sb.hits
                .iter()
                .map(|h| h.weight.expect("bypass sets are weight-validated") * h.count as f64)
                .sum::<f64>()
                / tokens
        };
        PatternFeatures {
            hypothetical,
            obfuscation: o.hits.len() as f64 / o.set_len as f64,
            privilege: pe.hits.len() as u32,
            multi_agent: !ma.hits.is_empty(),
            semantic_bypass,
            urgency: (1.0 + u.hits.len() as f64).ln(),
            ethics: ev.hits.len() as u32,
            degenerate,
        }
    }

    /// Evidence entries for every fired pattern, in scan order.
    pub fn evidence(&self) -> Vec<Evidence> {
        self.sets
            .iter()
            .flat_map(|(_, set_hits)| set_hits.hits.iter())
            .map(|hit| Evidence {
                layer: Layer::Pattern,
                source: hit.pattern_id.clone(),
                span: Some(hit.span),
            })
            .collect()
    }
}

/// Convenience wrapper: scan and aggregate in one call.
pub fn extract_pattern_features(prompt: &Prompt, config: &FeatureConfig) -> PatternFeatures {
    recognize(prompt, config).features()
}
