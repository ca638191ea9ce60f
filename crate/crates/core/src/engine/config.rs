use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::{defaults, FeatureConfig};
use crate::semantic::{ReferenceRecord, SemanticError};
use crate::types::{
    AttackCategory, MatchMode, PatternError, PatternSet, PatternSpec, ThresholdError,
    ThresholdTable, WeightError, WeightMatrix,
};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Toml {
        path: String,
        #[source]
        source: Box<toml::de::Error>,
    },
    #[error(transparent)]
    Pattern(#[from] PatternError),
    #[error(transparent)]
    Semantic(#[from] SemanticError),
    #[error(transparent)]
    Weight(#[from] WeightError),
    #[error(transparent)]
    Threshold(#[from] ThresholdError),
    #[error("unknown embedding provider `{0}` (expected `ngram-<dimension>`)")]
    UnknownProvider(String),
    #[error("signature `{id}` is terminal but targets `{category}`, which has no threshold; terminal signatures must target enabled categories")]
    TerminalSignatureDisabled { id: String, category: AttackCategory },
    #[error("signature `{id}`: benign cannot be a signature verdict")]
    BenignSignature { id: String },
    #[error("semantic.reference: `builtin`, `reference_path`, and `reference_inline` are mutually exclusive")]
    AmbiguousReference,
    #[error("{field}: {reason}")]
    InvalidValue { field: String, reason: String },
}

impl ConfigError {
    fn invalid(field: &str, reason: impl Into<String>) -> Self {
        ConfigError::InvalidValue {
            field: field.to_owned(),
            reason: reason.into(),
        }
    }
}

/// Which embedding function the semantic layer uses.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ProviderSpec {
    /// Builtin hashed character-trigram embedder with the given dimension.
    Ngram { dimension: usize },
}

impl ProviderSpec {
    pub fn parse(s: &str) -> Result<Self, ConfigError> {
        if let Some(dim) = s.strip_prefix("ngram-") {
            let dimension: usize = dim
                .parse()
                .map_err(|_| ConfigError::UnknownProvider(s.to_owned()))?;
            if dimension == 0 {
                return Err(ConfigError::UnknownProvider(s.to_owned()));
            }
            return Ok(ProviderSpec::Ngram { dimension });
        }
        Err(ConfigError::UnknownProvider(s.to_owned()))
    }

    pub fn name(&self) -> String {
        match self {
            ProviderSpec::Ngram { dimension } => format!("ngram-{dimension}"),
        }
    }
}

impl Default for ProviderSpec {
    fn default() -> Self {
        ProviderSpec::Ngram { dimension: 256 }
    }
}

/// Where the semantic reference corpus comes from.
#[derive(Debug, Clone, PartialEq)]
pub enum ReferenceSource {
    /// The persona prompts shipped with the crate.
    Builtin,
    /// A JSONL file of `{"id", "persona", "text"}` records.
    Path(PathBuf),
    /// Records given directly in the config.
    Inline(Vec<ReferenceRecord>),
}

impl Default for ReferenceSource {
    fn default() -> Self {
        ReferenceSource::Builtin
    }
}

/// A fast-path rule: a single pattern bound to a category. Evidence-only by
/// default; `terminal` rules short-circuit the pipeline with their category
/// as the verdict.
#[derive(Debug, Clone)]
pub struct SignatureSpec {
    id: String,
    category: AttackCategory,
    terminal: bool,
    pattern: PatternSpec,
}

impl SignatureSpec {
    pub fn new(
        id: impl Into<String>,
        category: AttackCategory,
        terminal: bool,
        mode: MatchMode,
        case_insensitive: bool,
        pattern: &str,
    ) -> Result<Self, ConfigError> {
        let id = id.into();
        if !category.is_attack() {
            return Err(ConfigError::BenignSignature { id });
        }
        let pattern = PatternSpec::new("signatures", id.clone(), mode, case_insensitive, pattern, None)?;
        Ok(SignatureSpec {
            id,
            category,
            terminal,
            pattern,
        })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn category(&self) -> AttackCategory {
        self.category
    }

    pub fn terminal(&self) -> bool {
        self.terminal
    }

    pub fn pattern(&self) -> &PatternSpec {
        &self.pattern
    }
}

/// Review-queue knobs carried in the engine config so one file describes a
/// whole deployment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReviewSettings {
    /// Results at or above this uncertainty are offered to the queue.
    pub min_uncertainty: f64,
    /// Maximum queued items; lower-uncertainty items are evicted first.
    pub capacity: usize,
    /// Decay scale of the uncertainty curve (distance from threshold at
    /// which uncertainty drops by a factor of e).
    pub scale: f64,
}

impl Default for ReviewSettings {
    fn default() -> Self {
        ReviewSettings {
            min_uncertainty: 0.5,
            capacity: 64,
            scale: 0.1,
        }
    }
}

/// Gateway knobs (used by the HTTP front end, parsed here so the engine
/// config file is the single deployment descriptor).
#[derive(Debug, Clone, PartialEq)]
pub struct GatewaySettings {
    /// On internal failure, answer benign (true) or refuse the request
    /// (false, the default: a screening outage should not wave prompts in).
    pub fail_open: bool,
    pub listen: String,
}

impl Default for GatewaySettings {
    fn default() -> Self {
        GatewaySettings {
            fail_open: false,
            listen: "127.0.0.1:8088".to_owned(),
        }
    }
}

/// Fully resolved engine configuration: pattern sets loaded and compiled,
/// weights and thresholds validated. Built from [`ConfigFile`] or defaults.
#[derive(Debug, Clone)]
pub struct EngineConfig {
    pub version_label: String,
    pub max_input_bytes: usize,
    pub semantic_enabled: bool,
    pub behavioral_enabled: bool,
    pub features: FeatureConfig,
    pub weights: WeightMatrix,
    pub thresholds: ThresholdTable,
    pub signatures: Vec<SignatureSpec>,
    pub provider: ProviderSpec,
    pub reference: ReferenceSource,
    pub embedding_cache_dir: Option<PathBuf>,
    /// Behavioral scores at or above this force a non-benign verdict.
    pub behavioral_veto_cutoff: f64,
    /// Score returned by the stub behavioral classifier.
    pub behavioral_constant: f64,
    pub review: ReviewSettings,
    pub gateway: GatewaySettings,
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig {
            version_label: "default".to_owned(),
            max_input_bytes: 32 * 1024,
            semantic_enabled: true,
            behavioral_enabled: false,
            features: FeatureConfig::default(),
            weights: WeightMatrix::default(),
            thresholds: ThresholdTable::default(),
            signatures: Vec::new(),
            provider: ProviderSpec::default(),
            reference: ReferenceSource::Builtin,
            embedding_cache_dir: None,
            behavioral_veto_cutoff: 0.9,
            behavioral_constant: 0.0,
            review: ReviewSettings::default(),
            gateway: GatewaySettings::default(),
        }
    }
}

impl EngineConfig {
    /// Loads a TOML config file. Relative paths inside the file resolve
    /// against the file's directory.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        EngineConfig::from_toml_str(&text, base, &path.display().to_string())
    }

    pub fn from_toml_str(text: &str, base_dir: &Path, origin: &str) -> Result<Self, ConfigError> {
        let file: ConfigFile = toml::from_str(text).map_err(|e| ConfigError::Toml {
            path: origin.to_owned(),
            source: Box::new(e),
        })?;
        EngineConfig::from_file(file, base_dir)
    }

    /// Applies a parsed [`ConfigFile`] over the defaults.
    pub fn from_file(file: ConfigFile, base_dir: &Path) -> Result<Self, ConfigError> {
        let mut cfg = EngineConfig::default();

        if let Some(label) = file.version_label {
            cfg.version_label = label;
        }
        if let Some(s) = file.sanitization {
            if let Some(max) = s.max_bytes {
                if max == 0 {
                    return Err(ConfigError::invalid("sanitization.max_bytes", "must be positive"));
                }
                cfg.max_input_bytes = max;
            }
        }
        if let Some(l) = file.layers {
            cfg.semantic_enabled = l.semantic.unwrap_or(cfg.semantic_enabled);
            cfg.behavioral_enabled = l.behavioral.unwrap_or(cfg.behavioral_enabled);
        }

        let feat = file.features.unwrap_or_default();
        let role_separator = feat.multi_agent_role_separator.unwrap_or(true);
        let mut sets = defaults::builtin_sets();
        let overrides: [(&str, &Option<PathBuf>, &mut PatternSet); 7] = [
            ("hypothetical", &feat.hypothetical, &mut sets.hypothetical),
            ("obfuscation", &feat.obfuscation, &mut sets.obfuscation),
            ("privilege", &feat.privilege, &mut sets.privilege),
            ("multi_agent", &feat.multi_agent, &mut sets.multi_agent),
            ("bypass", &feat.bypass, &mut sets.bypass),
            ("urgency", &feat.urgency, &mut sets.urgency),
            ("ethics", &feat.ethics, &mut sets.ethics),
        ];
        for (name, path, slot) in overrides {
            if let Some(path) = path {
                let resolved = resolve(base_dir, path);
                let text = std::fs::read_to_string(&resolved).map_err(|e| ConfigError::Io {
                    path: resolved.display().to_string(),
                    source: e,
                })?;
                // The set keeps its feature-slot id so pattern ids in
                // evidence stay stable regardless of file names.
                *slot = PatternSet::parse(name, &text)?;
            }
        }
        cfg.features = FeatureConfig::new(sets, role_separator)?;

        if let Some(w) = file.weights {
            cfg.weights = w;
        }
        if let Some(t) = file.thresholds {
            cfg.thresholds = t;
        }

        if let Some(entries) = file.signatures {
            let mut signatures = Vec::with_capacity(entries.len());
            for e in entries {
                let mode = match e.mode.as_str() {
                    "re" => MatchMode::Regex,
                    "sub" => MatchMode::Substring,
                    other => {
                        return Err(ConfigError::invalid(
                            "signatures.mode",
                            format!("unknown mode `{other}` (expected `re` or `sub`)"),
                        ))
                    }
                };
                if signatures.iter().any(|s: &SignatureSpec| s.id() == e.id) {
                    return Err(ConfigError::invalid(
                        "signatures",
                        format!("duplicate signature id `{}`", e.id),
                    ));
                }
                signatures.push(SignatureSpec::new(
                    e.id,
                    e.category,
                    e.terminal,
                    mode,
                    e.case_insensitive,
                    &e.pattern,
                )?);
            }
            cfg.signatures = signatures;
        }

        if let Some(s) = file.semantic {
            if let Some(p) = s.provider {
                cfg.provider = ProviderSpec::parse(&p)?;
            }
            let builtin_requested = match s.reference.as_deref() {
                None => false,
                Some("builtin") => true,
                Some(other) => {
                    return Err(ConfigError::invalid(
                        "semantic.reference",
                        format!("unknown source `{other}` (expected `builtin`; use reference_path or reference_inline otherwise)"),
                    ))
                }
            };
            let sources = builtin_requested as u8
                + s.reference_path.is_some() as u8
                + s.reference_inline.is_some() as u8;
            if sources > 1 {
                return Err(ConfigError::AmbiguousReference);
            }
            if let Some(path) = s.reference_path {
                cfg.reference = ReferenceSource::Path(resolve(base_dir, &path));
            } else if let Some(records) = s.reference_inline {
                if records.is_empty() {
                    return Err(ConfigError::invalid(
                        "semantic.reference_inline",
                        "must contain at least one record",
                    ));
                }
                cfg.reference = ReferenceSource::Inline(records);
            }
            if let Some(dir) = s.cache_dir {
                cfg.embedding_cache_dir = Some(resolve(base_dir, &dir));
            }
        }

        if let Some(b) = file.behavioral {
            if let Some(cutoff) = b.veto_cutoff {
                if !cutoff.is_finite() || !(0.0..=1.0).contains(&cutoff) {
                    return Err(ConfigError::invalid("behavioral.veto_cutoff", "must be in [0, 1]"));
                }
                cfg.behavioral_veto_cutoff = cutoff;
            }
            if let Some(score) = b.constant_score {
                if !score.is_finite() || !(0.0..=1.0).contains(&score) {
                    return Err(ConfigError::invalid("behavioral.constant_score", "must be in [0, 1]"));
                }
                cfg.behavioral_constant = score;
            }
        }

        if let Some(r) = file.review {
            if let Some(v) = r.min_uncertainty {
                if !v.is_finite() || !(0.0..=1.0).contains(&v) {
                    return Err(ConfigError::invalid("review.min_uncertainty", "must be in [0, 1]"));
                }
                cfg.review.min_uncertainty = v;
            }
            if let Some(v) = r.capacity {
                if v == 0 {
                    return Err(ConfigError::invalid("review.capacity", "must be positive"));
                }
                cfg.review.capacity = v;
            }
            if let Some(v) = r.scale {
                if !v.is_finite() || v <= 0.0 {
                    return Err(ConfigError::invalid("review.scale", "must be positive"));
                }
                cfg.review.scale = v;
            }
        }

        if let Some(g) = file.gateway {
            if let Some(fail_open) = g.fail_open {
                cfg.gateway.fail_open = fail_open;
            }
            if let Some(listen) = g.listen {
                cfg.gateway.listen = listen;
            }
        }

        // Terminal signatures must resolve to a scoreable verdict.
        for sig in &cfg.signatures {
            if sig.terminal() && !cfg.thresholds.is_enabled(sig.category()) {
                return Err(ConfigError::TerminalSignatureDisabled {
                    id: sig.id().to_owned(),
                    category: sig.category(),
                });
            }
        }

        Ok(cfg)
    }
}

fn resolve(base: &Path, path: &Path) -> PathBuf {
    if path.is_absolute() {
        path.to_owned()
    } else {
        base.join(path)
    }
}

/// The TOML schema. Every field is optional; omitted fields take the
/// defaults, so an empty file is a valid config.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub version_label: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sanitization: Option<SanitizationSection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub layers: Option<LayersSection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub features: Option<FeaturesSection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub weights: Option<WeightMatrix>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub thresholds: Option<ThresholdTable>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub signatures: Option<Vec<SignatureEntry>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub semantic: Option<SemanticSection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub behavioral: Option<BehavioralSection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub review: Option<ReviewSection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gateway: Option<GatewaySection>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SanitizationSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_bytes: Option<usize>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayersSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub semantic: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub behavioral: Option<bool>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeaturesSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub multi_agent_role_separator: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub hypothetical: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub obfuscation: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub privilege: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub multi_agent: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bypass: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub urgency: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ethics: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SignatureEntry {
    pub id: String,
    pub pattern: String,
    #[serde(default = "default_sig_mode")]
    pub mode: String,
    #[serde(default = "default_true")]
    pub case_insensitive: bool,
    pub category: AttackCategory,
    #[serde(default)]
    pub terminal: bool,
}

fn default_sig_mode() -> String {
    "sub".to_owned()
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SemanticSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub provider: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reference: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reference_path: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reference_inline: Option<Vec<ReferenceRecord>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cache_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BehavioralSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub veto_cutoff: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub constant_score: Option<f64>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReviewSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub min_uncertainty: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub capacity: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub scale: Option<f64>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GatewaySection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fail_open: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub listen: Option<String>,
}

/// Serializes a weight matrix and threshold table as a config fragment, for
/// writing optimizer output that can be pasted into or loaded as a config.
pub fn weights_to_toml(weights: &WeightMatrix, thresholds: &ThresholdTable) -> String {
    #[derive(Serialize)]
    struct Fragment<'a> {
        weights: SparseWeights<'a>,
        thresholds: &'a ThresholdTable,
    }
    // Emit only non-zero cells: readable and loads back identically because
    // missing cells deserialize to zero.
    struct SparseWeights<'a>(&'a WeightMatrix);
    impl Serialize for SparseWeights<'_> {
        fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
            let mut outer: BTreeMap<AttackCategory, BTreeMap<crate::types::FeatureId, f64>> =
                BTreeMap::new();
            for (c, f, w) in self.0.cells() {
                if w != 0.0 {
                    outer.entry(c).or_default().insert(f, w);
                }
            }
            outer.serialize(s)
        }
    }
    toml::to_string_pretty(&Fragment {
        weights: SparseWeights(weights),
        thresholds,
    })
    .expect("weight fragments serialize")
}
