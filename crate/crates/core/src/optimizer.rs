//! Grid-search tuning of weight cells against a labeled corpus.
//!
//! The search is exhaustive over a small set of *free cells* of the weight
//! matrix, with every other cell pinned to its current value. Exhaustive
//! search is only honest at small scale, so the spec caps how many cells one
//! category may free and how many candidates the whole grid may produce;
//! both caps are errors, not silent truncation.
//!
//! Candidates are scored on a stratified training slice and the winner is
//! re-scored on the held-out validation slice, so a report always shows
//! whether the tuned weights merely memorized the training items. Feature
//! vectors are extracted once per item up front; a candidate evaluation is
//! then pure arithmetic, which keeps even six-figure grids in CPU-bound
//! territory.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::{composite_threat, Engine};
use crate::evalkit::{macro_f1, ConfusionMatrix, LabeledCorpus};
use crate::types::{
    AttackCategory, FeatureId, FeatureVector, ThresholdTable, WeightError, WeightMatrix,
};

#[derive(Debug, Error)]
pub enum OptimizeError {
    #[error("corpus has no scoreable items")]
    EmptyCorpus,
    #[error("label `{category}` has only {count} item(s); stratified splitting needs at least 2 of every label present")]
    ClassTooSmall {
        category: AttackCategory,
        count: usize,
    },
    #[error("validation slice contains no attack items; tuning needs a mixed corpus")]
    NoValidationAttacks,
    #[error("validation fraction {0} must be strictly between 0 and 1")]
    BadFraction(f64),
    #[error("grid step {0} must be in (0, 1] and divide 1 evenly (0.1, 0.2, 0.25, 0.5, 1)")]
    BadStep(f64),
    #[error("no free cells to tune")]
    NoFreeCells,
    #[error("free cell {category}/{feature} listed twice")]
    DuplicateCell {
        category: AttackCategory,
        feature: FeatureId,
    },
    #[error("free cells must target attack categories; benign has no weight row")]
    BenignCell,
    #[error("{count} free cells for `{category}` exceed the per-category limit of {limit}; raise `max_free_per_category` or set `allow_unbounded`")]
    TooManyFreeCells {
        category: AttackCategory,
        count: usize,
        limit: usize,
    },
    #[error("grid has {candidates} candidates, over the cap of {limit}; coarsen `grid_step`, free fewer cells, or raise `max_candidates`")]
    TooManyCandidates { candidates: u128, limit: u64 },
    #[error(transparent)]
    Weight(#[from] WeightError),
}

/// What the search maximizes over the training slice.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    /// Exact label/verdict agreement (benign counts).
    #[default]
    Accuracy,
    /// Mean per-label F1; pushes minority attack classes harder than
    /// accuracy does on benign-heavy corpora.
    F1Macro,
}

impl Objective {
    pub fn name(self) -> &'static str {
        match self {
            Objective::Accuracy => "accuracy",
            Objective::F1Macro => "f1_macro",
        }
    }
}

impl std::fmt::Display for Objective {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// One tunable cell of the weight matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FreeCell {
    pub category: AttackCategory,
    pub feature: FeatureId,
}

impl std::fmt::Display for FreeCell {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}.{}", self.category, self.feature)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizationSpec {
    pub objective: Objective,
    /// Grid resolution; candidate values are 0, step, 2·step, ..., 1.
    pub grid_step: f64,
    /// Fraction of each label held out for validation.
    pub validation_fraction: f64,
    /// Seed for the split shuffle; same seed, same split.
    pub split_seed: u64,
    /// The cells the search may change. Everything else stays pinned.
    pub free_cells: Vec<FreeCell>,
    /// Per-category cap on free cells, unless `allow_unbounded`.
    pub max_free_per_category: usize,
    pub allow_unbounded: bool,
    /// Hard cap on grid size (levels^cells).
    pub max_candidates: u64,
    /// How many top candidates the report keeps.
    pub leaderboard_len: usize,
}

impl Default for OptimizationSpec {
    fn default() -> Self {
        OptimizationSpec {
            objective: Objective::default(),
            grid_step: 0.1,
            validation_fraction: 0.2,
            split_seed: 17,
            free_cells: Vec::new(),
            max_free_per_category: 3,
            allow_unbounded: false,
            max_candidates: 200_000,
            leaderboard_len: 16,
        }
    }
}

/// Indices into the corpus, disjoint and together covering every item.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitIndices {
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
}

/// Stratified train/validation split: each label is shuffled separately
/// (seeded, so reproducible) and contributes `round(fraction · n)` items to
/// validation, clamped so both slices keep at least one item per label.
pub fn stratified_split(
    corpus: &LabeledCorpus,
    fraction: f64,
    seed: u64,
) -> Result<SplitIndices, OptimizeError> {
    if !fraction.is_finite() || fraction <= 0.0 || fraction >= 1.0 {
        return Err(OptimizeError::BadFraction(fraction));
    }
    if corpus.is_empty() {
        return Err(OptimizeError::EmptyCorpus);
    }
    let mut by_label: Vec<(AttackCategory, Vec<usize>)> = Vec::new();
    for category in AttackCategory::ALL {
        let indices: Vec<usize> = corpus
            .items()
            .iter()
            .enumerate()
            .filter(|(_, item)| item.label == category)
            .map(|(i, _)| i)
            .collect();
        if indices.len() == 1 {
            return Err(OptimizeError::ClassTooSmall {
                category,
                count: 1,
            });
        }
        if !indices.is_empty() {
            by_label.push((category, indices));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train = Vec::new();
    let mut validation = Vec::new();
    for (_, mut indices) in by_label {
        indices.shuffle(&mut rng);
        let n = indices.len();
        let take = ((n as f64 * fraction).round() as usize).clamp(1, n - 1);
        validation.extend(indices.drain(..take));
        train.extend(indices);
    }
    if !validation
        .iter()
        .any(|&i| corpus.items()[i].label.is_attack())
    {
        return Err(OptimizeError::NoValidationAttacks);
    }
    train.sort_unstable();
    validation.sort_unstable();
    Ok(SplitIndices { train, validation })
}

/// One scored grid point. `values` aligns with the report's `free_cells`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateScore {
    /// Position in lexicographic grid order; doubles as the final tie-break.
    pub id: u64,
    pub values: Vec<f64>,
    /// Objective over the training slice.
    pub objective: f64,
    /// How many free cells this candidate zeroes (sparser wins ties).
    pub zero_cells: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchReport {
    pub objective: Objective,
    pub grid_step: f64,
    pub free_cells: Vec<FreeCell>,
    pub candidates_evaluated: u64,
    pub validation_fraction: f64,
    pub split_seed: u64,
    pub train_items: usize,
    pub validation_items: usize,
    /// Items dropped before scoring (oversized input).
    pub skipped_items: usize,
    /// Current weights scored on the training slice / validation slice.
    pub baseline_objective: f64,
    pub baseline_validation: f64,
    pub best: CandidateScore,
    /// Best candidate re-scored on the held-out slice.
    pub best_validation: f64,
    /// Top candidates by the same ordering that picked `best`.
    pub leaderboard: Vec<CandidateScore>,
    /// Full matrix with the winning values written into the free cells.
    pub best_weights: WeightMatrix,
}

impl SearchReport {
    /// Leaderboard as CSV: candidate id, one column per free cell, training
    /// objective, zero-cell count.
    pub fn to_csv(&self) -> String {
        let mut writer = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["candidate".to_string()];
        header.extend(self.free_cells.iter().map(|c| c.to_string()));
        header.push("objective".to_string());
        header.push("zero_cells".to_string());
        writer.write_record(&header).expect("in-memory write");
        for candidate in &self.leaderboard {
            let mut row = vec![candidate.id.to_string()];
            row.extend(candidate.values.iter().map(|v| v.to_string()));
            row.push(candidate.objective.to_string());
            row.push(candidate.zero_cells.to_string());
            writer.write_record(&row).expect("in-memory write");
        }
        String::from_utf8(writer.into_inner().expect("in-memory flush")).expect("csv is utf-8")
    }
}

/// The verdict [`classify`] would reach, without allocating the score map.
/// The candidate scan calls this millions of times, so it matters.
fn fast_verdict(
    features: &FeatureVector,
    weights: &WeightMatrix,
    thresholds: &ThresholdTable,
) -> AttackCategory {
    let mut best: Option<(AttackCategory, f64)> = None;
    for category in AttackCategory::ATTACKS {
        if !thresholds.is_enabled(category) {
            continue;
        }
        let score = composite_threat(features, weights, category);
        match best {
            Some((_, top)) if score <= top => {}
            _ => best = Some((category, score)),
        }
    }
    match best {
        Some((category, score))
            if score >= thresholds.get(category).expect("enabled category has a threshold") =>
        {
            category
        }
        _ => AttackCategory::Benign,
    }
}

fn objective_over(
    objective: Objective,
    weights: &WeightMatrix,
    thresholds: &ThresholdTable,
    slice: &[(FeatureVector, AttackCategory)],
) -> f64 {
    match objective {
        Objective::Accuracy => {
            let correct = slice
                .iter()
                .filter(|(features, label)| fast_verdict(features, weights, thresholds) == *label)
                .count();
            correct as f64 / slice.len() as f64
        }
        Objective::F1Macro => {
            let mut confusion = ConfusionMatrix::zeros();
            for (features, label) in slice {
                confusion.record(*label, fast_verdict(features, weights, thresholds));
            }
            macro_f1(&confusion)
        }
    }
}

/// Grid values 0, step, ..., 1, or `BadStep` when the step does not divide 1.
fn grid_values(step: f64) -> Result<Vec<f64>, OptimizeError> {
    if !step.is_finite() || step <= 0.0 || step > 1.0 {
        return Err(OptimizeError::BadStep(step));
    }
    let count = (1.0 / step).round();
    if (count * step - 1.0).abs() > 1e-9 {
        return Err(OptimizeError::BadStep(step));
    }
    Ok((0..=count as usize)
        .map(|i| ((i as f64 * step * 1e9).round() / 1e9).min(1.0))
        .collect())
}

/// Writes candidate `id`'s grid values into `out`, first cell most
/// significant, so ascending ids are ascending lexicographic order.
fn decode_candidate(id: u64, grid: &[f64], out: &mut [f64]) {
    let levels = grid.len() as u64;
    let mut rest = id;
    for slot in out.iter_mut().rev() {
        *slot = grid[(rest % levels) as usize];
        rest /= levels;
    }
}

/// Strict "is `a` a better search outcome than `b`": higher objective, then
/// fewer non-zero free cells, then earlier grid position. Total order, so
/// parallel and sequential scans agree.
fn better(a: &CandidateScore, b: &CandidateScore) -> bool {
    match a.objective.total_cmp(&b.objective) {
        std::cmp::Ordering::Greater => true,
        std::cmp::Ordering::Less => false,
        std::cmp::Ordering::Equal => match a.zero_cells.cmp(&b.zero_cells) {
            std::cmp::Ordering::Greater => true,
            std::cmp::Ordering::Less => false,
            std::cmp::Ordering::Equal => a.id < b.id,
        },
    }
}

fn push_top(top: &mut Vec<CandidateScore>, candidate: CandidateScore, cap: usize) {
    let at = top
        .binary_search_by(|probe| {
            if better(probe, &candidate) {
                std::cmp::Ordering::Less
            } else {
                std::cmp::Ordering::Greater
            }
        })
        .unwrap_err();
    if at < cap {
        top.insert(at, candidate);
        top.truncate(cap);
    }
}

struct Prepared {
    train: Vec<(FeatureVector, AttackCategory)>,
    validation: Vec<(FeatureVector, AttackCategory)>,
    skipped: usize,
}

fn prepare(
    engine: &Engine,
    corpus: &LabeledCorpus,
    spec: &OptimizationSpec,
) -> Result<Prepared, OptimizeError> {
    let split = stratified_split(corpus, spec.validation_fraction, spec.split_seed)?;
    let mut skipped = 0usize;
    let mut extract = |indices: &[usize]| -> Vec<(FeatureVector, AttackCategory)> {
        let mut out = Vec::with_capacity(indices.len());
        for &i in indices {
            let item = &corpus.items()[i];
            match engine.extract_features(&item.text) {
                Ok((features, _)) => out.push((features, item.label)),
                Err(_) => skipped += 1,
            }
        }
        out
    };
    let train = extract(&split.train);
    let validation = extract(&split.validation);
    if train.is_empty() || validation.is_empty() {
        return Err(OptimizeError::EmptyCorpus);
    }
    if !validation.iter().any(|(_, label)| label.is_attack()) {
        return Err(OptimizeError::NoValidationAttacks);
    }
    Ok(Prepared {
        train,
        validation,
        skipped,
    })
}

fn validate_cells(spec: &OptimizationSpec) -> Result<(), OptimizeError> {
    if spec.free_cells.is_empty() {
        return Err(OptimizeError::NoFreeCells);
    }
    for (i, cell) in spec.free_cells.iter().enumerate() {
        if !cell.category.is_attack() {
            return Err(OptimizeError::BenignCell);
        }
        if spec.free_cells[..i].contains(cell) {
            return Err(OptimizeError::DuplicateCell {
                category: cell.category,
                feature: cell.feature,
            });
        }
    }
    if !spec.allow_unbounded {
        for category in AttackCategory::ATTACKS {
            let count = spec
                .free_cells
                .iter()
                .filter(|c| c.category == category)
                .count();
            if count > spec.max_free_per_category {
                return Err(OptimizeError::TooManyFreeCells {
                    category,
                    count,
                    limit: spec.max_free_per_category,
                });
            }
        }
    }
    Ok(())
}

fn run_search(
    engine: &Engine,
    prepared: &Prepared,
    spec: &OptimizationSpec,
    parallel: bool,
) -> Result<SearchReport, OptimizeError> {
    validate_cells(spec)?;
    let grid = grid_values(spec.grid_step)?;
    let cells = spec.free_cells.len();
    let total_wide = (grid.len() as u128).pow(cells as u32);
    if total_wide > spec.max_candidates as u128 {
        return Err(OptimizeError::TooManyCandidates {
            candidates: total_wide,
            limit: spec.max_candidates,
        });
    }
    let total = total_wide as u64;

    let thresholds = &engine.config().thresholds;
    let base = engine.config().weights;
    let evaluate = |id: u64| -> CandidateScore {
        let mut values = vec![0.0; cells];
        decode_candidate(id, &grid, &mut values);
        let mut weights = base;
        for (cell, &value) in spec.free_cells.iter().zip(&values) {
            weights = weights
                .with_cell(cell.category, cell.feature, value)
                .expect("grid values are in [0, 1]");
        }
        let objective = objective_over(spec.objective, &weights, thresholds, &prepared.train);
        let zero_cells = values.iter().filter(|v| **v == 0.0).count() as u32;
        CandidateScore {
            id,
            values,
            objective,
            zero_cells,
        }
    };

    let cap = spec.leaderboard_len.max(1);
    let leaderboard = if parallel {
        scan_parallel(total, cap, &evaluate)
    } else {
        let mut top = Vec::new();
        for id in 0..total {
            push_top(&mut top, evaluate(id), cap);
        }
        top
    };
    let best = leaderboard.first().cloned().expect("grid is never empty");

    let mut best_weights = base;
    for (cell, &value) in spec.free_cells.iter().zip(&best.values) {
        best_weights = best_weights.with_cell(cell.category, cell.feature, value)?;
    }

    Ok(SearchReport {
        objective: spec.objective,
        grid_step: spec.grid_step,
        free_cells: spec.free_cells.clone(),
        candidates_evaluated: total,
        validation_fraction: spec.validation_fraction,
        split_seed: spec.split_seed,
        train_items: prepared.train.len(),
        validation_items: prepared.validation.len(),
        skipped_items: prepared.skipped,
        baseline_objective: objective_over(spec.objective, &base, thresholds, &prepared.train),
        baseline_validation: objective_over(
            spec.objective,
            &base,
            thresholds,
            &prepared.validation,
        ),
        best_validation: objective_over(
            spec.objective,
            &best_weights,
            thresholds,
            &prepared.validation,
        ),
        best,
        leaderboard,
        best_weights,
    })
}

#[cfg(feature = "parallel")]
fn scan_parallel(
    total: u64,
    cap: usize,
    evaluate: &(impl Fn(u64) -> CandidateScore + Sync),
) -> Vec<CandidateScore> {
    use rayon::prelude::*;
    (0..total)
        .into_par_iter()
        .map(evaluate)
        .fold(Vec::new, |mut top, candidate| {
            push_top(&mut top, candidate, cap);
            top
        })
        .reduce(Vec::new, |mut a, b| {
            for candidate in b {
                push_top(&mut a, candidate, cap);
            }
            a
        })
}

#[cfg(not(feature = "parallel"))]
fn scan_parallel(
    total: u64,
    cap: usize,
    evaluate: &(impl Fn(u64) -> CandidateScore + Sync),
) -> Vec<CandidateScore> {
    let mut top = Vec::new();
    for id in 0..total {
        push_top(&mut top, evaluate(id), cap);
    }
    top
}

/// Exhaustive search over `spec.free_cells`. Scans candidates in parallel
/// when the crate is built with the `parallel` feature; the outcome is
/// identical either way.
pub fn grid_search(
    engine: &Engine,
    corpus: &LabeledCorpus,
    spec: &OptimizationSpec,
) -> Result<SearchReport, OptimizeError> {
    let prepared = prepare(engine, corpus, spec)?;
    run_search(engine, &prepared, spec, true)
}

/// Single-threaded [`grid_search`]; also the differential oracle for the
/// parallel scan.
pub fn grid_search_sequential(
    engine: &Engine,
    corpus: &LabeledCorpus,
    spec: &OptimizationSpec,
) -> Result<SearchReport, OptimizeError> {
    let prepared = prepare(engine, corpus, spec)?;
    run_search(engine, &prepared, spec, false)
}

/// One search per enabled category, freeing exactly the cells that category
/// already uses (its non-zero row). This is the everyday retuning loop:
/// keep each row's shape, refit its magnitudes. `spec.free_cells` is
/// ignored. Categories with no threshold or an all-zero row are skipped.
pub fn grid_search_by_category(
    engine: &Engine,
    corpus: &LabeledCorpus,
    spec: &OptimizationSpec,
) -> Result<Vec<(AttackCategory, SearchReport)>, OptimizeError> {
    let prepared = prepare(engine, corpus, spec)?;
    let weights = engine.config().weights;
    let thresholds = &engine.config().thresholds;
    let mut reports = Vec::new();
    for category in AttackCategory::ATTACKS {
        if !thresholds.is_enabled(category) {
            continue;
        }
        let free_cells: Vec<FreeCell> = FeatureId::ALL
            .into_iter()
            .filter(|f| weights.get(category, *f) != 0.0)
            .map(|feature| FreeCell { category, feature })
            .collect();
        if free_cells.is_empty() {
            continue;
        }
        let sweep = OptimizationSpec {
            free_cells,
            ..spec.clone()
        };
        reports.push((category, run_search(engine, &prepared, &sweep, true)?));
    }
    if reports.is_empty() {
        return Err(OptimizeError::NoFreeCells);
    }
    Ok(reports)
}

/// Folds the winning row values of several per-category sweeps into one
/// matrix on top of `base`.
pub fn apply_best_rows(
    base: &WeightMatrix,
    reports: &[(AttackCategory, SearchReport)],
) -> Result<WeightMatrix, OptimizeError> {
    let mut weights = *base;
    for (_, report) in reports {
        for (cell, &value) in report.free_cells.iter().zip(&report.best.values) {
            weights = weights.with_cell(cell.category, cell.feature, value)?;
        }
    }
    Ok(weights)
}
