//! Multi-layer screening engine for adversarial LLM prompts.
//!
//! A prompt flows through sanitization, pattern scoring, semantic similarity,
//! and a weighted threshold classifier, producing a [`types::DetectionResult`]
//! with per-category threat scores, supporting evidence, and per-stage
//! latency. Around that pipeline sit a grid-search weight tuner
//! ([`optimizer`]), an uncertainty-driven review queue with versioned config
//! updates ([`adaptive`]), and a corpus evaluation kit ([`evalkit`]).

pub mod adaptive;
pub mod engine;
pub mod evalkit;
pub mod features;
pub mod optimizer;
pub mod semantic;
pub mod types;

use thiserror::Error;

/// Umbrella error for fallible entry points that cross module boundaries
/// (loading configs, corpora, pattern files).
#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Pattern(#[from] types::PatternError),
    #[error(transparent)]
    Semantic(#[from] semantic::SemanticError),
    #[error(transparent)]
    Config(#[from] engine::ConfigError),
    #[error(transparent)]
    Screen(#[from] engine::ScreenError),
    #[error(transparent)]
    Optimize(#[from] optimizer::OptimizeError),
    #[error(transparent)]
    Adaptive(#[from] adaptive::AdaptiveError),
    #[error(transparent)]
    Eval(#[from] evalkit::EvalError),
}

impl Error {
    pub(crate) fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
