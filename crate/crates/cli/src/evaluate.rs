//! `sentinel evaluate`: run a labeled corpus through the engine, print the
//! report, and enforce optional quality gates.

use std::path::PathBuf;

use anyhow::Context;
use sentinel_core::engine::Engine;
use sentinel_core::evalkit::{
    evaluate_with_options, render_report, EvalOptions, LabeledCorpus, ReportFormat,
};

use crate::config::ResolvedConfig;
use crate::{EXIT_FLAGGED, EXIT_OK};

#[derive(clap::Args)]
pub struct EvaluateArgs {
    /// Labeled corpus (JSONL: {"text", "label", optional "use_case"}).
    #[arg(long, value_name = "PATH")]
    corpus: PathBuf,
    #[arg(long, value_enum, default_value_t = Format::Text)]
    format: Format,
    /// Fail (exit 2) if the false-positive rate exceeds this.
    #[arg(long, value_name = "RATE")]
    gate_fpr: Option<f64>,
    /// Fail (exit 2) if the detection rate falls below this.
    #[arg(long, value_name = "RATE")]
    gate_detection: Option<f64>,
    /// Write the report here instead of stdout.
    #[arg(long, value_name = "PATH")]
    output: Option<PathBuf>,
    /// Skip latency measurement so reports are byte-stable across runs.
    #[arg(long)]
    no_latency: bool,
}

#[derive(Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Format {
    Text,
    Csv,
    Json,
}

impl From<Format> for ReportFormat {
    fn from(format: Format) -> ReportFormat {
        match format {
            Format::Text => ReportFormat::Text,
            Format::Csv => ReportFormat::Csv,
            Format::Json => ReportFormat::Json,
        }
    }
}

pub fn run(args: EvaluateArgs, resolved: ResolvedConfig) -> anyhow::Result<i32> {
    let engine = Engine::new(resolved.config).context("building engine")?;
    let corpus = LabeledCorpus::load(&args.corpus)?;
    let options = EvalOptions {
        measure_latency: !args.no_latency,
        ..EvalOptions::default()
    };
    let report = evaluate_with_options(&engine, &corpus, &options)?;
    let rendered = render_report(&report, args.format.into());
    match &args.output {
        Some(path) => std::fs::write(path, rendered)
            .with_context(|| format!("writing report to {}", path.display()))?,
        None => print!("{rendered}"),
    }

    let mut failed = false;
    if let Some(gate) = args.gate_fpr {
        let fpr = report.overall.false_positive_rate;
        if fpr > gate {
            eprintln!("gate failed: false-positive rate {fpr:.4} exceeds {gate:.4}");
            failed = true;
        } else {
            eprintln!("gate passed: false-positive rate {fpr:.4} within {gate:.4}");
        }
    }
    if let Some(gate) = args.gate_detection {
        let detection = report.overall.detection_rate;
        if detection < gate {
            eprintln!("gate failed: detection rate {detection:.4} below {gate:.4}");
            failed = true;
        } else {
            eprintln!("gate passed: detection rate {detection:.4} meets {gate:.4}");
        }
    }
    Ok(if failed { EXIT_FLAGGED } else { EXIT_OK })
}
