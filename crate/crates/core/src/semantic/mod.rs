//! Semantic layer: embeddings, similarity against a reference corpus of
//! known attack prompts (feature `R`), and the pluggable behavioral hook.

mod cache;
mod embedder;

pub use cache::{CachedProvider, DiskEmbeddingCache};
pub use embedder::NgramEmbedder;

use std::io::BufRead;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::types::Prompt;

#[derive(Debug, Error)]
pub enum SemanticError {
    #[error("vectors have different dimensions ({a} vs {b})")]
    DimensionMismatch { a: usize, b: usize },
    #[error("cosine similarity is undefined for a zero-norm vector")]
    ZeroNorm,
    #[error("embedding contains a non-finite component")]
    NonFinite,
    #[error("reference corpus is empty")]
    EmptyCorpus,
    #[error("reference corpus already contains this text (id `{0}`)")]
    DuplicateReference(String),
    #[error("reference corpus was embedded with `{corpus}` but the engine uses `{provider}`")]
    ProviderMismatch { corpus: String, provider: String },
    #[error("embedding provider failed: {0}")]
    Provider(String),
    #[error("behavioral classifier `{name}` returned {value}; scores must be in [0, 1]")]
    BehavioralOutOfRange { name: String, value: f64 },
    #[error("behavioral classifier `{name}` failed: {reason}")]
    BehavioralFailed { name: String, reason: String },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: line {line}: {source}")]
    Jsonl {
        path: String,
        line: usize,
        #[source]
        source: serde_json::Error,
    },
}

/// Anything that can turn text into a fixed-dimension vector.
///
/// Implementations must be deterministic per fingerprint: the same
/// fingerprint and text must always produce the same vector, because cached
/// and freshly-computed embeddings are used interchangeably.
pub trait EmbeddingProvider: Send + Sync {
    fn dimension(&self) -> usize;
    /// Stable identity of the embedding function (name, dimension, version).
    fn fingerprint(&self) -> String;
    fn embed(&self, text: &str) -> Result<Vec<f64>, SemanticError>;
}

/// Cosine similarity of two equal-dimension vectors, clamped into [-1, 1] to
/// absorb float rounding. Errs on dimension mismatch or a zero-norm input;
/// silently returning 0 would hide a broken embedding.
pub fn cosine_similarity(a: &[f64], b: &[f64]) -> Result<f64, SemanticError> {
    if a.len() != b.len() {
        return Err(SemanticError::DimensionMismatch { a: a.len(), b: b.len() });
    }
    let mut dot = 0.0;
    let mut norm_a = 0.0;
    let mut norm_b = 0.0;
    for (x, y) in a.iter().zip(b) {
        dot += x * y;
        norm_a += x * x;
        norm_b += y * y;
    }
    if norm_a == 0.0 || norm_b == 0.0 {
        return Err(SemanticError::ZeroNorm);
    }
    if a == b {
        // By definition, and it spares callers the sqrt rounding wobble:
        // identical text must score exactly 1.
        return Ok(1.0);
    }
    let cos = dot / (norm_a.sqrt() * norm_b.sqrt());
    if !cos.is_finite() {
        return Err(SemanticError::NonFinite);
    }
    Ok(cos.clamp(-1.0, 1.0))
}

/// One known attack prompt with its precomputed embedding.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceEntry {
    pub id: String,
    pub persona: String,
    pub text: String,
    pub embedding: Vec<f64>,
}

/// Wire format of one reference corpus line (embeddings are computed at load).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceRecord {
    pub id: String,
    pub persona: String,
    pub text: String,
}

/// Known attack prompts with embeddings, all produced by one provider
/// (recorded by fingerprint so a mismatched provider is caught, not silently
/// compared against incompatible vectors).
#[derive(Debug, Clone)]
pub struct ReferenceCorpus {
    provider_fingerprint: String,
    entries: Vec<ReferenceEntry>,
}

impl ReferenceCorpus {
    /// Embeds the given records with `provider`. Duplicate ids or texts are
    /// rejected: a duplicate text would silently double its similarity vote.
    pub fn from_records(
        records: Vec<ReferenceRecord>,
        provider: &dyn EmbeddingProvider,
    ) -> Result<Self, SemanticError> {
        if records.is_empty() {
            return Err(SemanticError::EmptyCorpus);
        }
        let mut entries: Vec<ReferenceEntry> = Vec::with_capacity(records.len());
        for rec in records {
            if let Some(dup) = entries
                .iter()
                .find(|e| e.id == rec.id || e.text == rec.text)
            {
                return Err(SemanticError::DuplicateReference(dup.id.clone()));
            }
            let embedding = provider.embed(&rec.text)?;
            entries.push(ReferenceEntry {
                id: rec.id,
                persona: rec.persona,
                text: rec.text,
                embedding,
            });
        }
        Ok(ReferenceCorpus {
            provider_fingerprint: provider.fingerprint(),
            entries,
        })
    }

    /// Loads a JSONL file of `{"id", "persona", "text"}` records and embeds
    /// them. Blank lines are skipped; parse errors carry the line number.
    pub fn load_jsonl(
        path: &Path,
        provider: &dyn EmbeddingProvider,
    ) -> Result<Self, SemanticError> {
        let file = std::fs::File::open(path).map_err(|e| SemanticError::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        let records = parse_reference_jsonl(std::io::BufReader::new(file), &path.display().to_string())?;
        ReferenceCorpus::from_records(records, provider)
    }

    pub fn parse_records(text: &str, origin: &str) -> Result<Vec<ReferenceRecord>, SemanticError> {
        parse_reference_jsonl(std::io::Cursor::new(text), origin)
    }

    /// The corpus shipped with the crate: a dozen well-known persona-override
    /// jailbreak prompts.
    pub fn builtin(provider: &dyn EmbeddingProvider) -> Result<Self, SemanticError> {
        let records = Self::parse_records(BUILTIN_REFERENCES, "builtin personas")?;
        ReferenceCorpus::from_records(records, provider)
    }

    pub fn provider_fingerprint(&self) -> &str {
        &self.provider_fingerprint
    }

    pub fn entries(&self) -> &[ReferenceEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Returns a new corpus with one record appended (the receiver is
    /// unchanged). Duplicate text or id is an error.
    pub fn with_appended(
        &self,
        record: ReferenceRecord,
        provider: &dyn EmbeddingProvider,
    ) -> Result<Self, SemanticError> {
        if provider.fingerprint() != self.provider_fingerprint {
            return Err(SemanticError::ProviderMismatch {
                corpus: self.provider_fingerprint.clone(),
                provider: provider.fingerprint(),
            });
        }
        if let Some(dup) = self
            .entries
            .iter()
            .find(|e| e.id == record.id || e.text == record.text)
        {
            return Err(SemanticError::DuplicateReference(dup.id.clone()));
        }
        let embedding = provider.embed(&record.text)?;
        let mut entries = self.entries.clone();
        entries.push(ReferenceEntry {
            id: record.id,
            persona: record.persona,
            text: record.text,
            embedding,
        });
        Ok(ReferenceCorpus {
            provider_fingerprint: self.provider_fingerprint.clone(),
            entries,
        })
    }

    /// Serializes back to the JSONL record format (embeddings excluded; they
    /// are derived data).
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for e in &self.entries {
            let rec = ReferenceRecord {
                id: e.id.clone(),
                persona: e.persona.clone(),
                text: e.text.clone(),
            };
            out.push_str(&serde_json::to_string(&rec).expect("records serialize"));
            out.push('\n');
        }
        out
    }
}

fn parse_reference_jsonl<R: BufRead>(
    reader: R,
    origin: &str,
) -> Result<Vec<ReferenceRecord>, SemanticError> {
    let mut records = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| SemanticError::Io {
            path: origin.to_owned(),
            source: e,
        })?;
        let trimmed = line.trim_start_matches('\u{feff}').trim();
        if trimmed.is_empty() {
            continue;
        }
        let record: ReferenceRecord =
            serde_json::from_str(trimmed).map_err(|e| SemanticError::Jsonl {
                path: origin.to_owned(),
                line: lineno + 1,
                source: e,
            })?;
        records.push(record);
    }
    Ok(records)
}

const BUILTIN_REFERENCES: &str = include_str!("../../data/reference/personas.jsonl");

/// Result of scoring a prompt against the reference corpus.
#[derive(Debug, Clone, PartialEq)]
pub struct RoleScore {
    /// Maximum cosine similarity over the corpus, in [-1, 1].
    pub similarity: f64,
    /// Id of the closest reference entry.
    pub best_reference: String,
}

/// Role-impersonation similarity `R`: the maximum cosine similarity between
/// the prompt's embedding and any reference entry.
///
/// Errors distinguish a degenerate prompt (zero-norm embedding, which the
/// engine maps to `R = 0` with the degenerate flag) from provider failure
/// (which degrades the semantic layer).
pub fn role_impersonation_score(
    prompt: &Prompt,
    corpus: &ReferenceCorpus,
    provider: &dyn EmbeddingProvider,
) -> Result<RoleScore, SemanticError> {
    if corpus.is_empty() {
        return Err(SemanticError::EmptyCorpus);
    }
    if provider.fingerprint() != corpus.provider_fingerprint {
        return Err(SemanticError::ProviderMismatch {
            corpus: corpus.provider_fingerprint.clone(),
            provider: provider.fingerprint(),
        });
    }
    let query = provider.embed(prompt.text())?;
    let mut best: Option<RoleScore> = None;
    for entry in corpus.entries() {
        let sim = cosine_similarity(&query, &entry.embedding)?;
        let better = match &best {
            None => true,
            Some(b) => sim > b.similarity,
        };
        if better {
            best = Some(RoleScore {
                similarity: sim,
                best_reference: entry.id.clone(),
            });
        }
    }
    Ok(best.expect("corpus is non-empty"))
}

/// Hook for an out-of-process behavioral model. Scores are probabilities in
/// [0, 1]; anything else is rejected by [`behavioral_score`].
pub trait BehavioralClassifier: Send + Sync {
    fn name(&self) -> &str;
    fn score(&self, text: &str) -> Result<f64, SemanticError>;
}

/// Default stand-in until a real model is wired up: always returns the same
/// score (0.0 unless configured otherwise), so the behavioral layer is
/// structurally present but decision-neutral.
#[derive(Debug, Clone)]
pub struct ConstantClassifier {
    score: f64,
}

impl ConstantClassifier {
    pub fn new(score: f64) -> Self {
        ConstantClassifier { score }
    }
}

impl Default for ConstantClassifier {
    fn default() -> Self {
        ConstantClassifier { score: 0.0 }
    }
}

impl BehavioralClassifier for ConstantClassifier {
    fn name(&self) -> &str {
        "constant"
    }

    fn score(&self, _text: &str) -> Result<f64, SemanticError> {
        Ok(self.score)
    }
}

/// Runs a behavioral classifier and validates its output range.
pub fn behavioral_score(
    text: &str,
    classifier: &dyn BehavioralClassifier,
) -> Result<f64, SemanticError> {
    let value = classifier.score(text)?;
    if !value.is_finite() || !(0.0..=1.0).contains(&value) {
        return Err(SemanticError::BehavioralOutOfRange {
            name: classifier.name().to_owned(),
            value,
        });
    }
    Ok(value)
}
