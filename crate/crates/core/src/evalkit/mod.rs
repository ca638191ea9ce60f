//! Corpus evaluation: run the engine over labeled prompts and report
//! accuracy, detection rate, false-positive breakdowns, a full confusion
//! matrix, and latency percentiles.
//!
//! The report is deliberately plain data (serde-friendly structs) so it can
//! be rendered as text for humans, CSV for spreadsheets, or JSON for
//! dashboards ([`render_report`]). Everything except the latency block is
//! deterministic for a fixed engine and corpus; latency is measured, so
//! comparisons across runs should use [`EvalOptions::measure_latency`] =
//! `false` or ignore that block.

mod corpus;

pub use corpus::{CorpusItem, LabeledCorpus, DEFAULT_USE_CASES};

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::{Engine, ScreenError};
use crate::types::{AttackCategory, DetectionResult, Stage};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path} line {line}: {source}")]
    Jsonl {
        path: String,
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error("item {item}: unknown use case `{tag}` (expected one of: {})", allowed.join(", "))]
    UnknownUseCase {
        item: usize,
        tag: String,
        allowed: Vec<String>,
    },
    #[error("corpus has no scoreable items")]
    EmptyCorpus,
    #[error("no latency samples")]
    NoLatencySamples,
    #[error("confusion matrix {0}")]
    ConfusionShape(String),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

/// 7x7 confusion matrix over the full taxonomy (six attacks plus benign).
/// Rows are the corpus label, columns the engine verdict, both in category
/// declaration order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "ConfusionWire", into = "ConfusionWire")]
pub struct ConfusionMatrix {
    counts: [[u64; 7]; 7],
}

/// Serialized form: explicit labels so a matrix file is self-describing and
/// a label-order mismatch is a load error instead of silently wrong math.
#[derive(Serialize, Deserialize)]
struct ConfusionWire {
    labels: Vec<String>,
    rows: Vec<Vec<u64>>,
}

impl From<ConfusionMatrix> for ConfusionWire {
    fn from(m: ConfusionMatrix) -> Self {
        ConfusionWire {
            labels: ConfusionMatrix::labels().iter().map(|s| s.to_string()).collect(),
            rows: m.counts.iter().map(|row| row.to_vec()).collect(),
        }
    }
}

impl TryFrom<ConfusionWire> for ConfusionMatrix {
    type Error = EvalError;

    fn try_from(wire: ConfusionWire) -> Result<Self, EvalError> {
        let expected: Vec<&str> = ConfusionMatrix::labels().to_vec();
        if wire.labels != expected {
            return Err(EvalError::ConfusionShape(format!(
                "labels must be exactly [{}] in that order, got [{}]",
                expected.join(", "),
                wire.labels.join(", ")
            )));
        }
        if wire.rows.len() != 7 || wire.rows.iter().any(|r| r.len() != 7) {
            return Err(EvalError::ConfusionShape(format!(
                "expected 7 rows of 7 counts, got {} rows",
                wire.rows.len()
            )));
        }
        let mut counts = [[0u64; 7]; 7];
        for (i, row) in wire.rows.iter().enumerate() {
            counts[i].copy_from_slice(row);
        }
        Ok(ConfusionMatrix { counts })
    }
}

impl Default for ConfusionMatrix {
    fn default() -> Self {
        Self::zeros()
    }
}

impl ConfusionMatrix {
    pub fn zeros() -> Self {
        ConfusionMatrix {
            counts: [[0; 7]; 7],
        }
    }

    /// Row/column labels, in matrix order.
    pub fn labels() -> [&'static str; 7] {
        let mut out = [""; 7];
        for (i, cat) in AttackCategory::ALL.iter().enumerate() {
            out[i] = cat.name();
        }
        out
    }

    fn index(category: AttackCategory) -> usize {
        // `ALL` is declaration order, so the discriminant is the position.
        category as usize
    }

    pub fn record(&mut self, label: AttackCategory, verdict: AttackCategory) {
        self.counts[Self::index(label)][Self::index(verdict)] += 1;
    }

    pub fn get(&self, label: AttackCategory, verdict: AttackCategory) -> u64 {
        self.counts[Self::index(label)][Self::index(verdict)]
    }

    /// Items carrying this corpus label.
    pub fn label_total(&self, label: AttackCategory) -> u64 {
        self.counts[Self::index(label)].iter().sum()
    }

    /// Items the engine assigned this verdict.
    pub fn verdict_total(&self, verdict: AttackCategory) -> u64 {
        self.counts.iter().map(|row| row[Self::index(verdict)]).sum()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    /// CSV form: a `label` column followed by one column per verdict.
    pub fn to_csv(&self) -> String {
        let mut writer = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["label".to_string()];
        header.extend(Self::labels().iter().map(|s| s.to_string()));
        writer.write_record(&header).expect("in-memory write");
        for (i, cat) in AttackCategory::ALL.iter().enumerate() {
            let mut row = vec![cat.name().to_string()];
            row.extend(self.counts[i].iter().map(|c| c.to_string()));
            writer.write_record(&row).expect("in-memory write");
        }
        String::from_utf8(writer.into_inner().expect("in-memory flush")).expect("csv is utf-8")
    }

    /// Parses the exact shape [`to_csv`](Self::to_csv) produces, rejecting
    /// reordered or missing labels.
    pub fn from_csv(text: &str) -> Result<Self, EvalError> {
        let mut reader = csv::Reader::from_reader(text.as_bytes());
        let headers = reader.headers()?.clone();
        let mut expected = vec!["label"];
        expected.extend(Self::labels());
        if headers.iter().collect::<Vec<_>>() != expected {
            return Err(EvalError::ConfusionShape(format!(
                "csv header must be [{}], got [{}]",
                expected.join(", "),
                headers.iter().collect::<Vec<_>>().join(", ")
            )));
        }
        let mut counts = [[0u64; 7]; 7];
        let mut seen = [false; 7];
        for record in reader.records() {
            let record = record?;
            if record.len() != 8 {
                return Err(EvalError::ConfusionShape(format!(
                    "row has {} fields, expected 8",
                    record.len()
                )));
            }
            let label: AttackCategory = record[0]
                .parse()
                .map_err(|e| EvalError::ConfusionShape(format!("row label: {e}")))?;
            let i = Self::index(label);
            if seen[i] {
                return Err(EvalError::ConfusionShape(format!(
                    "duplicate row for `{label}`"
                )));
            }
            seen[i] = true;
            for (j, field) in record.iter().skip(1).enumerate() {
                counts[i][j] = field.parse().map_err(|e| {
                    EvalError::ConfusionShape(format!("count `{field}` in row `{label}`: {e}"))
                })?;
            }
        }
        if !seen.iter().all(|s| *s) {
            return Err(EvalError::ConfusionShape(
                "missing rows for some labels".to_string(),
            ));
        }
        Ok(ConfusionMatrix { counts })
    }
}

/// How the single protection score folds detection and false positives
/// together.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProtectionFormula {
    /// Detection discounted by the false-positive rate: a scanner that flags
    /// everything scores zero, not one.
    #[default]
    DetectionTimesSpecificity,
    /// Plain average of detection rate and specificity.
    Mean,
}

impl ProtectionFormula {
    /// The formula as humans read it, embedded in reports so a score is
    /// never separated from its definition.
    pub fn formula(self) -> &'static str {
        match self {
            ProtectionFormula::DetectionTimesSpecificity => {
                "detection_rate * (1 - false_positive_rate)"
            }
            ProtectionFormula::Mean => "(detection_rate + (1 - false_positive_rate)) / 2",
        }
    }

    pub fn apply(self, detection_rate: f64, false_positive_rate: f64) -> f64 {
        match self {
            ProtectionFormula::DetectionTimesSpecificity => {
                detection_rate * (1.0 - false_positive_rate)
            }
            ProtectionFormula::Mean => (detection_rate + (1.0 - false_positive_rate)) / 2.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalOptions {
    pub formula: ProtectionFormula,
    /// Include measured latency percentiles in the report. Turn off when
    /// reports are compared for equality: timing is not deterministic.
    pub measure_latency: bool,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions {
            formula: ProtectionFormula::default(),
            measure_latency: true,
        }
    }
}

/// Headline rates over the scored items (rejected ones are counted but
/// excluded from every rate).
///
/// Edge conventions: with no attack items the detection rate is 1.0 (nothing
/// was missed) and with no benign items the false-positive rate is 0.0
/// (nothing was misflagged), so the protection score stays meaningful for
/// one-sided corpora.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverallMetrics {
    pub items_scored: u64,
    /// Items refused before scoring (oversized input).
    pub items_rejected: u64,
    /// Exact label/verdict agreement, benign included.
    pub accuracy: f64,
    /// Attack items flagged as *some* attack, the right category or not.
    pub detection_rate: f64,
    /// Benign items flagged as any attack.
    pub false_positive_rate: f64,
    pub false_negative_rate: f64,
    /// Mean F1 over the labels present in the corpus (exact-category).
    pub macro_f1: f64,
    /// `detection_rate` and `false_positive_rate` folded into one number by
    /// the formula named in the report.
    pub protection_score: f64,
}

/// Exact-category precision/recall for one attack label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryMetrics {
    pub support: u64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// False-positive breakdown for one benign use case.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UseCaseMetrics {
    pub support: u64,
    pub false_positives: u64,
    pub false_positive_rate: f64,
}

/// Order statistics over one latency series, in microseconds. Percentiles
/// are nearest-rank: p95 of n samples is the ceil(0.95·n)-th smallest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatencyStats {
    pub samples: u64,
    pub min_us: u64,
    pub max_us: u64,
    pub mean_us: f64,
    pub p50_us: u64,
    pub p95_us: u64,
    pub p99_us: u64,
}

impl LatencyStats {
    pub fn from_samples(samples: &[u64]) -> Result<Self, EvalError> {
        if samples.is_empty() {
            return Err(EvalError::NoLatencySamples);
        }
        let mut sorted = samples.to_vec();
        sorted.sort_unstable();
        let nearest_rank = |p: usize| -> u64 {
            let rank = (p * sorted.len()).div_ceil(100).max(1);
            sorted[rank - 1]
        };
        Ok(LatencyStats {
            samples: sorted.len() as u64,
            min_us: sorted[0],
            max_us: sorted[sorted.len() - 1],
            mean_us: sorted.iter().sum::<u64>() as f64 / sorted.len() as f64,
            p50_us: nearest_rank(50),
            p95_us: nearest_rank(95),
            p99_us: nearest_rank(99),
        })
    }
}

/// Whole-pipeline and per-stage latency statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatencySummary {
    pub total: LatencyStats,
    pub input_sanitization: LatencyStats,
    pub pattern_recognition: LatencyStats,
    pub feature_extraction: LatencyStats,
    pub semantic_analysis: LatencyStats,
    pub classification_decision: LatencyStats,
}

impl LatencySummary {
    pub fn stage(&self, stage: Stage) -> &LatencyStats {
        match stage {
            Stage::InputSanitization => &self.input_sanitization,
            Stage::PatternRecognition => &self.pattern_recognition,
            Stage::FeatureExtraction => &self.feature_extraction,
            Stage::SemanticAnalysis => &self.semantic_analysis,
            Stage::ClassificationDecision => &self.classification_decision,
        }
    }
}

/// Everything [`evaluate`] measures, keyed so reports from different engine
/// versions can be told apart.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub engine_version: String,
    /// Human-readable definition of `overall.protection_score`.
    pub protection_formula: String,
    pub overall: OverallMetrics,
    /// Exact-category metrics per attack label present in the corpus.
    pub per_category: BTreeMap<String, CategoryMetrics>,
    /// False-positive breakdown per benign use case (untagged benign items
    /// fall under `untagged`).
    pub per_use_case: BTreeMap<String, UseCaseMetrics>,
    pub confusion: ConfusionMatrix,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub latency: Option<LatencySummary>,
}

/// Screens the whole corpus (in parallel when the engine is built with the
/// `parallel` feature) and computes the default report.
pub fn evaluate(engine: &Engine, corpus: &LabeledCorpus) -> Result<MetricsReport, EvalError> {
    evaluate_with_options(engine, corpus, &EvalOptions::default())
}

pub fn evaluate_with_options(
    engine: &Engine,
    corpus: &LabeledCorpus,
    options: &EvalOptions,
) -> Result<MetricsReport, EvalError> {
    let texts: Vec<String> = corpus.items().iter().map(|i| i.text.clone()).collect();
    report_from_outcomes(engine, corpus, engine.screen_batch(&texts), options)
}

/// Single-threaded [`evaluate_with_options`]; also the differential oracle
/// for the parallel path.
pub fn evaluate_sequential(
    engine: &Engine,
    corpus: &LabeledCorpus,
    options: &EvalOptions,
) -> Result<MetricsReport, EvalError> {
    let texts: Vec<String> = corpus.items().iter().map(|i| i.text.clone()).collect();
    report_from_outcomes(engine, corpus, engine.screen_batch_sequential(&texts), options)
}

fn report_from_outcomes(
    engine: &Engine,
    corpus: &LabeledCorpus,
    outcomes: Vec<Result<DetectionResult, ScreenError>>,
    options: &EvalOptions,
) -> Result<MetricsReport, EvalError> {
    let mut confusion = ConfusionMatrix::zeros();
    let mut rejected: u64 = 0;
    let mut use_cases: BTreeMap<String, (u64, u64)> = BTreeMap::new();
    let mut totals: Vec<u64> = Vec::new();
    let mut stages: [Vec<u64>; 5] = Default::default();

    for (item, outcome) in corpus.items().iter().zip(outcomes) {
        let result = match outcome {
            Ok(result) => result,
            Err(ScreenError::TooLong { .. }) => {
                rejected += 1;
                continue;
            }
        };
        confusion.record(item.label, result.verdict);
        if item.label == AttackCategory::Benign {
            let tag = item.use_case.clone().unwrap_or_else(|| "untagged".to_string());
            let bucket = use_cases.entry(tag).or_insert((0, 0));
            bucket.0 += 1;
            if result.verdict.is_attack() {
                bucket.1 += 1;
            }
        }
        if options.measure_latency {
            totals.push(result.latency.total_us());
            for (i, stage) in Stage::ALL.iter().enumerate() {
                stages[i].push(result.latency.get(*stage));
            }
        }
    }

    let scored = confusion.total();
    if scored == 0 {
        return Err(EvalError::EmptyCorpus);
    }

    let diagonal: u64 = AttackCategory::ALL.iter().map(|c| confusion.get(*c, *c)).sum();
    let attacks_total: u64 = AttackCategory::ATTACKS.iter().map(|c| confusion.label_total(*c)).sum();
    let attacks_missed: u64 = AttackCategory::ATTACKS
        .iter()
        .map(|c| confusion.get(*c, AttackCategory::Benign))
        .sum();
    let benign_total = confusion.label_total(AttackCategory::Benign);
    let benign_flagged = benign_total - confusion.get(AttackCategory::Benign, AttackCategory::Benign);

    let detection_rate = if attacks_total == 0 {
        1.0
    } else {
        (attacks_total - attacks_missed) as f64 / attacks_total as f64
    };
    let false_positive_rate = if benign_total == 0 {
        0.0
    } else {
        benign_flagged as f64 / benign_total as f64
    };

    let macro_f1 = macro_f1(&confusion);

    let mut per_category = BTreeMap::new();
    for category in AttackCategory::ATTACKS {
        let support = confusion.label_total(category);
        if support == 0 {
            continue;
        }
        let tp = confusion.get(category, category) as f64;
        let predicted = confusion.verdict_total(category) as f64;
        let precision = if predicted > 0.0 { tp / predicted } else { 0.0 };
        let recall = tp / support as f64;
        per_category.insert(
            category.name().to_string(),
            CategoryMetrics {
                support,
                precision,
                recall,
                f1: category_f1(&confusion, category),
            },
        );
    }

    let per_use_case = use_cases
        .into_iter()
        .map(|(tag, (support, fp))| {
            (
                tag,
                UseCaseMetrics {
                    support,
                    false_positives: fp,
                    false_positive_rate: fp as f64 / support as f64,
                },
            )
        })
        .collect();

    let latency = if options.measure_latency {
        Some(LatencySummary {
            total: LatencyStats::from_samples(&totals)?,
            input_sanitization: LatencyStats::from_samples(&stages[0])?,
            pattern_recognition: LatencyStats::from_samples(&stages[1])?,
            feature_extraction: LatencyStats::from_samples(&stages[2])?,
            semantic_analysis: LatencyStats::from_samples(&stages[3])?,
            classification_decision: LatencyStats::from_samples(&stages[4])?,
        })
    } else {
        None
    };

    Ok(MetricsReport {
        engine_version: engine.version().to_string(),
        protection_formula: options.formula.formula().to_string(),
        overall: OverallMetrics {
            items_scored: scored,
            items_rejected: rejected,
            accuracy: diagonal as f64 / scored as f64,
            detection_rate,
            false_positive_rate,
            false_negative_rate: 1.0 - detection_rate,
            macro_f1,
            protection_score: options.formula.apply(detection_rate, false_positive_rate),
        },
        per_category,
        per_use_case,
        confusion,
        latency,
    })
}

/// Exact-category F1 for one label (zero when nothing was labeled or
/// predicted as it).
pub fn category_f1(confusion: &ConfusionMatrix, category: AttackCategory) -> f64 {
    let tp = confusion.get(category, category) as f64;
    let labeled = confusion.label_total(category) as f64;
    let predicted = confusion.verdict_total(category) as f64;
    let precision = if predicted > 0.0 { tp / predicted } else { 0.0 };
    let recall = if labeled > 0.0 { tp / labeled } else { 0.0 };
    if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    }
}

/// Mean exact-category F1 over the labels that actually occur (benign
/// included). Zero for an empty matrix.
pub fn macro_f1(confusion: &ConfusionMatrix) -> f64 {
    let present: Vec<AttackCategory> = AttackCategory::ALL
        .iter()
        .copied()
        .filter(|c| confusion.label_total(*c) > 0)
        .collect();
    if present.is_empty() {
        return 0.0;
    }
    present.iter().map(|c| category_f1(confusion, *c)).sum::<f64>() / present.len() as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Text,
    Csv,
    Json,
}

/// Renders a report for humans (`Text`), spreadsheets (`Csv`, long format:
/// `section,name,metric,value`), or machines (`Json`). The confusion matrix
/// is included in text and JSON; for CSV use
/// [`ConfusionMatrix::to_csv`] — mixing two rectangular shapes in one CSV
/// file helps nobody.
pub fn render_report(report: &MetricsReport, format: ReportFormat) -> String {
    match format {
        ReportFormat::Json => {
            let mut out = serde_json::to_string_pretty(report).expect("report serializes");
            out.push('\n');
            out
        }
        ReportFormat::Csv => render_csv(report),
        ReportFormat::Text => render_text(report),
    }
}

fn render_csv(report: &MetricsReport) -> String {
    let mut writer = csv::Writer::from_writer(Vec::new());
    let mut row = |section: &str, name: &str, metric: &str, value: String| {
        writer
            .write_record([section, name, metric, &value])
            .expect("in-memory write");
    };
    row("meta", "", "engine_version", report.engine_version.clone());
    row("meta", "", "protection_formula", report.protection_formula.clone());
    let o = &report.overall;
    row("overall", "", "items_scored", o.items_scored.to_string());
    row("overall", "", "items_rejected", o.items_rejected.to_string());
    row("overall", "", "accuracy", o.accuracy.to_string());
    row("overall", "", "detection_rate", o.detection_rate.to_string());
    row("overall", "", "false_positive_rate", o.false_positive_rate.to_string());
    row("overall", "", "false_negative_rate", o.false_negative_rate.to_string());
    row("overall", "", "macro_f1", o.macro_f1.to_string());
    row("overall", "", "protection_score", o.protection_score.to_string());
    for (name, m) in &report.per_category {
        row("category", name, "support", m.support.to_string());
        row("category", name, "precision", m.precision.to_string());
        row("category", name, "recall", m.recall.to_string());
        row("category", name, "f1", m.f1.to_string());
    }
    for (name, m) in &report.per_use_case {
        row("use_case", name, "support", m.support.to_string());
        row("use_case", name, "false_positives", m.false_positives.to_string());
        row("use_case", name, "false_positive_rate", m.false_positive_rate.to_string());
    }
    if let Some(latency) = &report.latency {
        let mut series = vec![("total", &latency.total)];
        for stage in Stage::ALL {
            series.push((stage.name(), latency.stage(stage)));
        }
        for (name, stats) in series {
            row("latency", name, "samples", stats.samples.to_string());
            row("latency", name, "min_us", stats.min_us.to_string());
            row("latency", name, "mean_us", stats.mean_us.to_string());
            row("latency", name, "p50_us", stats.p50_us.to_string());
            row("latency", name, "p95_us", stats.p95_us.to_string());
            row("latency", name, "p99_us", stats.p99_us.to_string());
            row("latency", name, "max_us", stats.max_us.to_string());
        }
    }
    drop(row);
    // Prepend the header by writing through a fresh writer; csv::Writer has
    // no "header then records of different width" mode for plain records.
    let body = String::from_utf8(writer.into_inner().expect("in-memory flush")).expect("utf-8");
    format!("section,name,metric,value\n{body}")
}

fn short_code(category: AttackCategory) -> &'static str {
    match category {
        AttackCategory::RoleImpersonation => "RI",
        AttackCategory::LogicSubversion => "LS",
        AttackCategory::Obfuscation => "OB",
        AttackCategory::PrivilegeEscalation => "PE",
        AttackCategory::SocialEngineering => "SE",
        AttackCategory::DataExfiltration => "DE",
        AttackCategory::Benign => "BN",
    }
}

fn render_text(report: &MetricsReport) -> String {
    let mut out = String::new();
    let o = &report.overall;
    let _ = writeln!(out, "engine {}", report.engine_version);
    let _ = writeln!(
        out,
        "items: {} scored, {} rejected",
        o.items_scored, o.items_rejected
    );
    let _ = writeln!(
        out,
        "overall: accuracy {:.3} | detection {:.3} | fpr {:.3} | fnr {:.3} | macro-f1 {:.3}",
        o.accuracy, o.detection_rate, o.false_positive_rate, o.false_negative_rate, o.macro_f1
    );
    let _ = writeln!(
        out,
        "protection {:.3}  [{}]",
        o.protection_score, report.protection_formula
    );
    if !report.per_category.is_empty() {
        let _ = writeln!(out, "per category (exact match):");
        for (name, m) in &report.per_category {
            let _ = writeln!(
                out,
                "  {name:<22} support {:>4}  precision {:.3}  recall {:.3}  f1 {:.3}",
                m.support, m.precision, m.recall, m.f1
            );
        }
    }
    if !report.per_use_case.is_empty() {
        let _ = writeln!(out, "benign use cases:");
        for (name, m) in &report.per_use_case {
            let _ = writeln!(
                out,
                "  {name:<26} support {:>4}  fp {:>3}  fpr {:.3}",
                m.support, m.false_positives, m.false_positive_rate
            );
        }
    }
    let _ = writeln!(out, "confusion (rows = label, columns = verdict):");
    let _ = write!(out, "  {:<22}", "");
    for cat in AttackCategory::ALL {
        let _ = write!(out, "{:>7}", short_code(cat));
    }
    let _ = writeln!(out);
    for label in AttackCategory::ALL {
        let _ = write!(out, "  {:<22}", label.name());
        for verdict in AttackCategory::ALL {
            let _ = write!(out, "{:>7}", report.confusion.get(label, verdict));
        }
        let _ = writeln!(out);
    }
    if let Some(latency) = &report.latency {
        let _ = writeln!(out, "latency (us, nearest-rank percentiles):");
        let mut series = vec![("total", &latency.total)];
        for stage in Stage::ALL {
            series.push((stage.name(), latency.stage(stage)));
        }
        for (name, stats) in series {
            let _ = writeln!(
                out,
                "  {name:<24} p50 {:>6}  p95 {:>6}  p99 {:>6}  max {:>6}  mean {:>9.1}",
                stats.p50_us, stats.p95_us, stats.p99_us, stats.max_us, stats.mean_us
            );
        }
    }
    out
}
