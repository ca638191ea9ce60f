use std::collections::BTreeMap;
use std::io::BufRead;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::types::AttackCategory;

use super::EvalError;

/// The benign use cases shipped as the default tag vocabulary.
pub const DEFAULT_USE_CASES: [&str; 6] = [
    "technical_documentation",
    "educational_content",
    "creative_writing",
    "role_playing_games",
    "hypothetical_discussions",
    "code_generation",
];

/// One labeled evaluation prompt. `use_case` is meaningful for benign items
/// (it buckets the false-positive breakdown) but any item may carry one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusItem {
    pub text: String,
    pub label: AttackCategory,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub use_case: Option<String>,
}

/// A labeled prompt corpus (JSONL: one `{"text", "label", "use_case"?}`
/// object per line). Labels outside the taxonomy and use-case tags outside
/// the vocabulary are load errors with line numbers, not surprises later.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledCorpus {
    items: Vec<CorpusItem>,
}

impl LabeledCorpus {
    /// Validates items against a use-case vocabulary.
    pub fn new(items: Vec<CorpusItem>, vocabulary: &[&str]) -> Result<Self, EvalError> {
        for (i, item) in items.iter().enumerate() {
            if let Some(tag) = &item.use_case {
                if !vocabulary.contains(&tag.as_str()) {
                    return Err(EvalError::UnknownUseCase {
                        item: i + 1,
                        tag: tag.clone(),
                        allowed: vocabulary.iter().map(|s| s.to_string()).collect(),
                    });
                }
            }
        }
        Ok(LabeledCorpus { items })
    }

    /// Loads JSONL with the default use-case vocabulary.
    pub fn load(path: &Path) -> Result<Self, EvalError> {
        Self::load_with_vocabulary(path, &DEFAULT_USE_CASES)
    }

    pub fn load_with_vocabulary(path: &Path, vocabulary: &[&str]) -> Result<Self, EvalError> {
        let file = std::fs::File::open(path).map_err(|e| EvalError::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        Self::from_reader(
            std::io::BufReader::new(file),
            &path.display().to_string(),
            vocabulary,
        )
    }

    pub fn parse(text: &str, origin: &str) -> Result<Self, EvalError> {
        Self::from_reader(std::io::Cursor::new(text), origin, &DEFAULT_USE_CASES)
    }

    pub fn from_reader<R: BufRead>(
        reader: R,
        origin: &str,
        vocabulary: &[&str],
    ) -> Result<Self, EvalError> {
        let mut items = Vec::new();
        for (lineno, line) in reader.lines().enumerate() {
            let line = line.map_err(|e| EvalError::Io {
                path: origin.to_owned(),
                source: e,
            })?;
            let trimmed = line.trim_start_matches('\u{feff}').trim();
            if trimmed.is_empty() {
                continue;
            }
            // serde names the offending field and lists valid labels on an
            // unknown variant, so the error text is self-explanatory.
            let item: CorpusItem = serde_json::from_str(trimmed).map_err(|e| EvalError::Jsonl {
                path: origin.to_owned(),
                line: lineno + 1,
                source: e,
            })?;
            if let Some(tag) = &item.use_case {
                if !vocabulary.contains(&tag.as_str()) {
                    return Err(EvalError::UnknownUseCase {
                        item: lineno + 1,
                        tag: tag.clone(),
                        allowed: vocabulary.iter().map(|s| s.to_string()).collect(),
                    });
                }
            }
            items.push(item);
        }
        Ok(LabeledCorpus { items })
    }

    /// The corpus shipped with the crate: a small mixed set covering every
    /// attack category and every default benign use case.
    pub fn starter() -> Self {
        Self::parse(STARTER_CORPUS, "builtin starter corpus").expect("starter corpus is valid")
    }

    pub fn items(&self) -> &[CorpusItem] {
        &self.items
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// Item counts per label, in category order.
    pub fn label_counts(&self) -> BTreeMap<AttackCategory, usize> {
        let mut counts = BTreeMap::new();
        for item in &self.items {
            *counts.entry(item.label).or_insert(0) += 1;
        }
        counts
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for item in &self.items {
            out.push_str(&serde_json::to_string(item).expect("items serialize"));
            out.push('\n');
        }
        out
    }
}

const STARTER_CORPUS: &str = include_str!("../../data/corpus/starter.jsonl");
