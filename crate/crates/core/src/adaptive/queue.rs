//! Bounded review buffer holding the screenings most worth a human's time.

use std::cmp::Ordering;
use std::path::Path;
use std::sync::Mutex;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::engine::{EngineConfig, ReviewSettings};
use crate::types::{AttackCategory, DetectionResult};

use super::{uncertainty, AdaptiveError};

/// Review state of a queued screening.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReviewStatus {
    /// Waiting for a reviewer.
    Pending,
    /// A reviewer assigned the true category. Benign is a valid label: it
    /// records a false positive.
    Labeled(AttackCategory),
    /// A reviewer decided the verdict needs no correction.
    Dismissed,
}

/// One screening queued for review: the prompt, the full result the engine
/// gave (scores and evidence are what the reviewer weighs), and where the
/// review stands.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReviewItem {
    /// Admission order, unique within a queue's lifetime (or a saved file).
    pub sequence: u64,
    pub text: String,
    pub result: DetectionResult,
    pub uncertainty: f64,
    pub submitted_at: DateTime<Utc>,
    pub status: ReviewStatus,
}

impl ReviewItem {
    /// The verdict under review.
    pub fn verdict(&self) -> AttackCategory {
        self.result.verdict
    }
}

/// What [`ReviewQueue::offer`] did with a candidate.
#[derive(Debug, Clone, PartialEq)]
pub enum Admission {
    /// Admitted into spare capacity.
    Queued { sequence: u64 },
    /// Admitted by evicting the least uncertain queued item.
    Replaced { sequence: u64, evicted: ReviewItem },
    /// Under the queue's uncertainty floor; not worth a reviewer's time.
    BelowFloor,
    /// Queue full of items at least this uncertain; the incumbents stay.
    Rejected,
}

impl Admission {
    /// Sequence assigned to the candidate, if it was admitted.
    pub fn sequence(&self) -> Option<u64> {
        match self {
            Admission::Queued { sequence } | Admission::Replaced { sequence, .. } => {
                Some(*sequence)
            }
            Admission::BelowFloor | Admission::Rejected => None,
        }
    }

    pub fn admitted(&self) -> bool {
        self.sequence().is_some()
    }
}

/// A bounded buffer of the most uncertain screenings, shareable across
/// threads (the gateway offers items from concurrent request handlers).
///
/// Items are kept sorted by uncertainty descending, then admission order.
/// The queue holds only pending items: labeling or dismissing removes the
/// item and hands it back with the outcome attached, so the caller — usually
/// whatever turns reviews into config mutations — owns it from then on and
/// nothing resolved lingers in the buffer.
#[derive(Debug)]
pub struct ReviewQueue {
    inner: Mutex<Inner>,
}

#[derive(Debug)]
struct Inner {
    /// Sorted: uncertainty descending, sequence ascending.
    items: Vec<ReviewItem>,
    next_sequence: u64,
    capacity: usize,
    min_uncertainty: f64,
}

impl Inner {
    fn insert_sorted(&mut self, item: ReviewItem) {
        // Fresh admissions carry the highest sequence so far, so placing the
        // item after every queued entry that is at least as uncertain keeps
        // both sort keys correct.
        let at = self
            .items
            .partition_point(|q| q.uncertainty.total_cmp(&item.uncertainty) != Ordering::Less);
        self.items.insert(at, item);
    }
}

impl ReviewQueue {
    /// An empty queue. `capacity` must be positive and `min_uncertainty`
    /// within [0, 1]; the config loader enforces the same bounds, so direct
    /// violations are treated as programming errors.
    pub fn new(capacity: usize, min_uncertainty: f64) -> Self {
        assert!(capacity > 0, "review queue capacity must be positive");
        assert!(
            min_uncertainty.is_finite() && (0.0..=1.0).contains(&min_uncertainty),
            "uncertainty floor must be in [0, 1]"
        );
        ReviewQueue {
            inner: Mutex::new(Inner {
                items: Vec::new(),
                next_sequence: 1,
                capacity,
                min_uncertainty,
            }),
        }
    }

    pub fn from_settings(settings: &ReviewSettings) -> Self {
        ReviewQueue::new(settings.capacity, settings.min_uncertainty)
    }

    /// Offers one screening. Admission requires the uncertainty to reach the
    /// floor and, when the queue is full, to strictly beat the least
    /// uncertain queued item — on a tie the incumbent stays. Sequences are
    /// assigned only on admission, so rejected offers leave no gaps.
    pub fn offer(
        &self,
        text: &str,
        result: &DetectionResult,
        uncertainty: f64,
    ) -> Result<Admission, AdaptiveError> {
        if !uncertainty.is_finite() || !(0.0..=1.0).contains(&uncertainty) {
            return Err(AdaptiveError::BadUncertainty(uncertainty));
        }
        let mut inner = self.inner.lock().expect("review queue lock");
        if uncertainty < inner.min_uncertainty {
            return Ok(Admission::BelowFloor);
        }
        let evicted = if inner.items.len() == inner.capacity {
            let worst = inner.items.last().expect("capacity is positive");
            if worst.uncertainty.total_cmp(&uncertainty) != Ordering::Less {
                return Ok(Admission::Rejected);
            }
            inner.items.pop()
        } else {
            None
        };
        let sequence = inner.next_sequence;
        inner.next_sequence += 1;
        inner.insert_sorted(ReviewItem {
            sequence,
            text: text.to_owned(),
            result: result.clone(),
            uncertainty,
            submitted_at: Utc::now(),
            status: ReviewStatus::Pending,
        });
        Ok(match evicted {
            Some(evicted) => Admission::Replaced { sequence, evicted },
            None => Admission::Queued { sequence },
        })
    }

    /// Computes a result's uncertainty under `config` and offers its text:
    /// the one-call integration point for the gateway and CLI.
    pub fn consider(
        &self,
        text: &str,
        result: &DetectionResult,
        config: &EngineConfig,
    ) -> Result<Admission, AdaptiveError> {
        let u = uncertainty(
            &result.category_scores,
            &config.thresholds,
            config.review.scale,
        );
        self.offer(text, result, u)
    }

    /// Removes the item and returns it with the reviewer's category attached.
    pub fn label(
        &self,
        sequence: u64,
        category: AttackCategory,
    ) -> Result<ReviewItem, AdaptiveError> {
        self.resolve(sequence, ReviewStatus::Labeled(category))
    }

    /// Removes the item and returns it marked as needing no correction.
    pub fn dismiss(&self, sequence: u64) -> Result<ReviewItem, AdaptiveError> {
        self.resolve(sequence, ReviewStatus::Dismissed)
    }

    fn resolve(&self, sequence: u64, status: ReviewStatus) -> Result<ReviewItem, AdaptiveError> {
        let mut inner = self.inner.lock().expect("review queue lock");
        let at = inner
            .items
            .iter()
            .position(|i| i.sequence == sequence)
            .ok_or(AdaptiveError::NotFound { sequence })?;
        let mut item = inner.items.remove(at);
        item.status = status;
        Ok(item)
    }

    pub fn len(&self) -> usize {
        self.inner.lock().expect("review queue lock").items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn capacity(&self) -> usize {
        self.inner.lock().expect("review queue lock").capacity
    }

    pub fn min_uncertainty(&self) -> f64 {
        self.inner.lock().expect("review queue lock").min_uncertainty
    }

    /// The most uncertain pending item — what a reviewer should look at next.
    pub fn peek(&self) -> Option<ReviewItem> {
        self.inner
            .lock()
            .expect("review queue lock")
            .items
            .first()
            .cloned()
    }

    /// All pending items, most uncertain first.
    pub fn snapshot(&self) -> Vec<ReviewItem> {
        self.inner.lock().expect("review queue lock").items.clone()
    }

    /// One JSON object per line, in queue order.
    pub fn export_jsonl(&self) -> String {
        let mut out = String::new();
        for item in self.snapshot() {
            out.push_str(&serde_json::to_string(&item).expect("review items serialize"));
            out.push('\n');
        }
        out
    }

    pub fn save(&self, path: &Path) -> Result<(), AdaptiveError> {
        std::fs::write(path, self.export_jsonl()).map_err(|e| AdaptiveError::Io {
            path: path.display().to_string(),
            source: e,
        })
    }

    /// Restores a saved queue. Saved items must all be pending (resolution
    /// removes items before anything persists them), unique by sequence, and
    /// fit `capacity`. Items under the floor are kept — they were admitted
    /// under whatever floor applied at the time; the floor gates new offers.
    pub fn load(
        path: &Path,
        capacity: usize,
        min_uncertainty: f64,
    ) -> Result<Self, AdaptiveError> {
        let text = std::fs::read_to_string(path).map_err(|e| AdaptiveError::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        let mut items: Vec<ReviewItem> = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() {
                continue;
            }
            let item: ReviewItem =
                serde_json::from_str(line).map_err(|e| AdaptiveError::Jsonl {
                    path: path.display().to_string(),
                    line: lineno + 1,
                    source: e,
                })?;
            if item.status != ReviewStatus::Pending {
                return Err(AdaptiveError::NonPending {
                    sequence: item.sequence,
                });
            }
            if !item.uncertainty.is_finite() || !(0.0..=1.0).contains(&item.uncertainty) {
                return Err(AdaptiveError::BadUncertainty(item.uncertainty));
            }
            if items.iter().any(|q| q.sequence == item.sequence) {
                return Err(AdaptiveError::DuplicateSequence {
                    sequence: item.sequence,
                });
            }
            items.push(item);
        }
        if items.len() > capacity {
            return Err(AdaptiveError::CapacityExceeded {
                count: items.len(),
                capacity,
            });
        }
        items.sort_by(|a, b| {
            b.uncertainty
                .total_cmp(&a.uncertainty)
                .then(a.sequence.cmp(&b.sequence))
        });
        let next_sequence = items.iter().map(|i| i.sequence).max().unwrap_or(0) + 1;
        let queue = ReviewQueue::new(capacity, min_uncertainty);
        {
            let mut inner = queue.inner.lock().expect("review queue lock");
            inner.items = items;
            inner.next_sequence = next_sequence;
        }
        Ok(queue)
    }
}
