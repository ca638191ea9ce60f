//! `sentinel optimize`: exhaustive grid search over selected weight cells,
//! writing a loadable tuned config and a leaderboard CSV.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use sentinel_core::engine::{weights_to_toml, Engine, EngineConfig};
use sentinel_core::evalkit::LabeledCorpus;
use sentinel_core::optimizer::{
    apply_best_rows, grid_search, grid_search_by_category, FreeCell, Objective, OptimizationSpec,
    SearchReport,
};
use sentinel_core::types::{AttackCategory, FeatureId, WeightMatrix};

use crate::config::ResolvedConfig;
use crate::EXIT_OK;

#[derive(clap::Args)]
pub struct OptimizeArgs {
    /// Labeled corpus the candidates are scored against.
    #[arg(long, value_name = "PATH")]
    corpus: PathBuf,
    /// Grid resolution; candidate values are 0, step, 2*step, ..., 1.
    #[arg(long, default_value_t = 0.1, value_name = "STEP")]
    step: f64,
    /// Free-cell mask file: one `category.feature` per line (for example
    /// `privilege_escalation.PE`), `#` comments allowed. Without a mask,
    /// each enabled category's existing non-zero row is retuned separately.
    #[arg(long, value_name = "PATH")]
    mask: Option<PathBuf>,
    /// Seed for the train/validation split shuffle.
    #[arg(long, default_value_t = 17, value_name = "N")]
    seed: u64,
    #[arg(long, value_enum, default_value_t = ObjectiveArg::Accuracy)]
    objective: ObjectiveArg,
    /// Fraction of each label held out to validate the winner.
    #[arg(long, default_value_t = 0.2, value_name = "FRACTION")]
    holdout: f64,
    /// Where to write the tuned config. Written next to the source config
    /// if you want its relative pattern paths to keep resolving.
    #[arg(long, default_value = "sentinel-tuned.toml", value_name = "PATH")]
    out: PathBuf,
    /// Where to write the leaderboard CSV.
    #[arg(long = "report", default_value = "sentinel-search.csv", value_name = "PATH")]
    report_path: PathBuf,
}

#[derive(Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum ObjectiveArg {
    Accuracy,
    F1Macro,
}

impl From<ObjectiveArg> for Objective {
    fn from(objective: ObjectiveArg) -> Objective {
        match objective {
            ObjectiveArg::Accuracy => Objective::Accuracy,
            ObjectiveArg::F1Macro => Objective::F1Macro,
        }
    }
}

pub fn run(args: OptimizeArgs, resolved: ResolvedConfig) -> anyhow::Result<i32> {
    let engine = Engine::new(resolved.config.clone()).context("building engine")?;
    let corpus = LabeledCorpus::load(&args.corpus)?;
    let mut spec = OptimizationSpec {
        objective: args.objective.into(),
        grid_step: args.step,
        validation_fraction: args.holdout,
        split_seed: args.seed,
        ..OptimizationSpec::default()
    };

    // With a mask, one joint search over exactly those cells; without, one
    // sweep per category over its existing row.
    let (sweeps, tuned) = match &args.mask {
        Some(path) => {
            spec.free_cells = parse_mask(path)?;
            let report = grid_search(&engine, &corpus, &spec)?;
            let weights = report.best_weights;
            (vec![("mask".to_owned(), report)], weights)
        }
        None => {
            let reports = grid_search_by_category(&engine, &corpus, &spec)?;
            let weights = apply_best_rows(&engine.config().weights, &reports)?;
            let sweeps = reports
                .into_iter()
                .map(|(category, report)| (category.name().to_owned(), report))
                .collect();
            (sweeps, weights)
        }
    };

    write_leaderboard(&args.report_path, &sweeps)?;
    write_tuned_config(&args.out, &resolved, &tuned)?;
    print!("{}", summary(&engine, &sweeps, &tuned));
    println!("wrote {}", args.out.display());
    println!("wrote {}", args.report_path.display());
    Ok(EXIT_OK)
}

fn parse_mask(path: &Path) -> anyhow::Result<Vec<FreeCell>> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading mask {}", path.display()))?;
    let mut cells = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let bad = |what: &str| {
            anyhow::anyhow!("{}:{}: {what} in `{line}`", path.display(), lineno + 1)
        };
        let Some((category, feature)) = line.split_once('.') else {
            return Err(bad("expected `category.feature`"));
        };
        cells.push(FreeCell {
            category: category.parse::<AttackCategory>().map_err(|e| bad(&e.to_string()))?,
            feature: feature.parse::<FeatureId>().map_err(|e| bad(&e.to_string()))?,
        });
    }
    if cells.is_empty() {
        bail!("mask {} lists no cells", path.display());
    }
    Ok(cells)
}

/// Long-format CSV: one row per (sweep, leaderboard candidate, free cell),
/// so mixed sweeps with different cell sets stay rectangular.
fn write_leaderboard(path: &Path, sweeps: &[(String, SearchReport)]) -> anyhow::Result<()> {
    let mut writer = csv::Writer::from_path(path)
        .with_context(|| format!("writing leaderboard {}", path.display()))?;
    writer.write_record(["sweep", "candidate", "cell", "value", "objective", "zero_cells"])?;
    for (sweep, report) in sweeps {
        for candidate in &report.leaderboard {
            for (cell, value) in report.free_cells.iter().zip(&candidate.values) {
                writer.write_record([
                    sweep.as_str(),
                    &candidate.id.to_string(),
                    &cell.to_string(),
                    &value.to_string(),
                    &candidate.objective.to_string(),
                    &candidate.zero_cells.to_string(),
                ])?;
            }
        }
    }
    writer.flush()?;
    Ok(())
}

/// Writes the tuned weights as a config. When the session config came from a
/// file, that file is re-read and only `weights`, `thresholds`, and
/// `version_label` are replaced, so pattern paths and service settings carry
/// over byte-for-byte. The written file is loaded back and compiled before
/// success is claimed.
fn write_tuned_config(
    out: &Path,
    resolved: &ResolvedConfig,
    weights: &WeightMatrix,
) -> anyhow::Result<()> {
    let fragment = weights_to_toml(weights, &resolved.config.thresholds);
    let text = match &resolved.path {
        Some(source) => {
            let source_text = std::fs::read_to_string(source)
                .with_context(|| format!("re-reading config {}", source.display()))?;
            let mut doc: toml::Table = source_text
                .parse()
                .with_context(|| format!("re-parsing config {}", source.display()))?;
            let patch: toml::Table = fragment.parse().expect("weight fragments are valid toml");
            for (key, value) in patch {
                doc.insert(key, value);
            }
            doc.insert(
                "version_label".to_owned(),
                toml::Value::String(format!("{}-tuned", resolved.config.version_label)),
            );
            toml::to_string_pretty(&doc).expect("patched config serializes")
        }
        None => format!("version_label = \"tuned\"\n\n{fragment}"),
    };
    std::fs::write(out, text).with_context(|| format!("writing {}", out.display()))?;
    let loaded = EngineConfig::load(out)
        .with_context(|| format!("verifying the written config {}", out.display()))?;
    Engine::new(loaded).with_context(|| format!("verifying the written config {}", out.display()))?;
    Ok(())
}

fn summary(engine: &Engine, sweeps: &[(String, SearchReport)], tuned: &WeightMatrix) -> String {
    let mut out = String::new();
    let before = engine.config().weights;
    for (sweep, report) in sweeps {
        let _ = writeln!(
            out,
            "sweep {sweep}: {} {:.4} train (baseline {:.4}), {:.4} holdout; \
             {} candidates over {} train / {} validation items",
            report.objective,
            report.best.objective,
            report.baseline_objective,
            report.best_validation,
            report.candidates_evaluated,
            report.train_items,
            report.validation_items,
        );
    }
    let mut changed = 0;
    for category in AttackCategory::ATTACKS {
        for feature in FeatureId::ALL {
            let (old, new) = (before.get(category, feature), tuned.get(category, feature));
            if old != new {
                let _ = writeln!(out, "  {category}.{feature}: {old:.2} -> {new:.2}");
                changed += 1;
            }
        }
    }
    if changed == 0 {
        let _ = writeln!(out, "  current weights already optimal on this corpus; no cells changed");
    }
    out
}
