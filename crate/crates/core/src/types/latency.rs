use std::time::Instant;

use serde::{Deserialize, Serialize};

/// The five measured pipeline stages, in execution order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    InputSanitization,
    PatternRecognition,
    FeatureExtraction,
    SemanticAnalysis,
    ClassificationDecision,
}

impl Stage {
    pub const ALL: [Stage; 5] = [
        Stage::InputSanitization,
        Stage::PatternRecognition,
        Stage::FeatureExtraction,
        Stage::SemanticAnalysis,
        Stage::ClassificationDecision,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::InputSanitization => "input_sanitization",
            Stage::PatternRecognition => "pattern_recognition",
            Stage::FeatureExtraction => "feature_extraction",
            Stage::SemanticAnalysis => "semantic_analysis",
            Stage::ClassificationDecision => "classification_decision",
        }
    }
}

impl std::fmt::Display for Stage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Per-stage wall-clock timings in microseconds. The total is not stored; it
/// is always the exact sum of the five stages, so the two can never disagree.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct StageLatency {
    pub input_sanitization_us: u64,
    pub pattern_recognition_us: u64,
    pub feature_extraction_us: u64,
    pub semantic_analysis_us: u64,
    pub classification_decision_us: u64,
}

impl StageLatency {
    pub fn get(&self, stage: Stage) -> u64 {
        match stage {
            Stage::InputSanitization => self.input_sanitization_us,
            Stage::PatternRecognition => self.pattern_recognition_us,
            Stage::FeatureExtraction => self.feature_extraction_us,
            Stage::SemanticAnalysis => self.semantic_analysis_us,
            Stage::ClassificationDecision => self.classification_decision_us,
        }
    }

    pub fn set(&mut self, stage: Stage, micros: u64) {
        match stage {
            Stage::InputSanitization => self.input_sanitization_us = micros,
            Stage::PatternRecognition => self.pattern_recognition_us = micros,
            Stage::FeatureExtraction => self.feature_extraction_us = micros,
            Stage::SemanticAnalysis => self.semantic_analysis_us = micros,
            Stage::ClassificationDecision => self.classification_decision_us = micros,
        }
    }

    pub fn total_us(&self) -> u64 {
        Stage::ALL.into_iter().map(|s| self.get(s)).sum()
    }
}

/// Measures stage durations against a shared start point.
pub struct StageTimer {
    latency: StageLatency,
    mark: Instant,
}

impl StageTimer {
    pub fn start() -> Self {
        StageTimer {
            latency: StageLatency::default(),
            mark: Instant::now(),
        }
    }

    /// Records the elapsed time since the previous mark as `stage` and resets
    /// the mark, so consecutive calls partition the wall clock with no gaps.
    pub fn lap(&mut self, stage: Stage) {
        let now = Instant::now();
        let micros = now.duration_since(self.mark).as_micros().min(u64::MAX as u128) as u64;
        self.latency.set(stage, micros);
        self.mark = now;
    }

    pub fn finish(self) -> StageLatency {
        self.latency
    }
}
