use super::{EmbeddingProvider, SemanticError};

/// Deterministic, dependency-free embedding: lowercased character trigrams
/// hashed (FNV-1a) into a fixed number of buckets, L2-normalized.
///
/// Not a substitute for a learned sentence encoder — it captures lexical
/// overlap, not meaning — but it is fast, stable across platforms, and good
/// enough to rank near-copies of known jailbreak prompts far above unrelated
/// text. Swap in a real provider via [`EmbeddingProvider`] for production.
#[derive(Debug, Clone)]
pub struct NgramEmbedder {
    dimension: usize,
}

impl NgramEmbedder {
    pub fn new(dimension: usize) -> Self {
        assert!(dimension > 0, "embedding dimension must be positive");
        NgramEmbedder { dimension }
    }
}

impl Default for NgramEmbedder {
    fn default() -> Self {
        NgramEmbedder::new(256)
    }
}

const FNV_OFFSET: u64 = 0xcbf29ce484222325;
const FNV_PRIME: u64 = 0x100000001b3;

fn fnv1a(bytes: impl Iterator<Item = u8>) -> u64 {
    let mut hash = FNV_OFFSET;
    for b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(FNV_PRIME);
    }
    hash
}

impl EmbeddingProvider for NgramEmbedder {
    fn dimension(&self) -> usize {
        self.dimension
    }

    fn fingerprint(&self) -> String {
        format!("ngram3-{}-v1", self.dimension)
    }

    fn embed(&self, text: &str) -> Result<Vec<f64>, SemanticError> {
        let lowered = text.to_lowercase();
        let chars: Vec<char> = lowered.chars().collect();
        let mut counts = vec![0.0_f64; self.dimension];

        let mut bump = |gram: &[char]| {
            let gram: String = gram.iter().collect();
            let hash = fnv1a(gram.bytes());
            counts[(hash % self.dimension as u64) as usize] += 1.0;
        };

        if chars.len() >= 3 {
            for gram in chars.windows(3) {
                bump(gram);
            }
        } else if !chars.is_empty() {
            // Too short for a trigram: hash the whole text as one gram so
            // short-but-real inputs still embed.
            bump(&chars);
        }

        let norm = counts.iter().map(|c| c * c).sum::<f64>().sqrt();
        if norm > 0.0 {
            for c in counts.iter_mut() {
                *c /= norm;
            }
        }
        // Empty/whitespace-only text yields the zero vector; similarity
        // against it is undefined and callers treat it as degenerate input.
        Ok(counts)
    }
}
