//! `sentinel screen`: one prompt in, a verdict out, the exit code as the
//! machine-readable answer.

use std::io::Read;
use std::path::{Path, PathBuf};

use anyhow::Context;
use sentinel_core::adaptive::{Admission, ReviewQueue};
use sentinel_core::engine::Engine;
use sentinel_core::types::DetectionResult;

use crate::config::ResolvedConfig;
use crate::{EXIT_FLAGGED, EXIT_OK};

#[derive(clap::Args)]
#[command(group = clap::ArgGroup::new("input").required(true).multiple(false))]
pub struct ScreenArgs {
    /// Prompt text given directly as an argument.
    #[arg(long, group = "input", value_name = "PROMPT")]
    text: Option<String>,
    /// Read the prompt from standard input until end-of-file.
    #[arg(long, group = "input")]
    stdin: bool,
    /// Read the prompt from a file.
    #[arg(long, group = "input", value_name = "PATH")]
    file: Option<PathBuf>,
    /// Print the full breakdown: features, per-category scores, the verdict
    /// row's per-feature contributions, and evidence.
    #[arg(long)]
    explain: bool,
    #[arg(long, value_enum, default_value_t = Format::Text)]
    format: Format,
    /// Offer the result to this review-queue file (created on first use)
    /// when its uncertainty clears the configured floor.
    #[arg(long, value_name = "PATH")]
    review_queue: Option<PathBuf>,
}

#[derive(Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Format {
    Text,
    Json,
}

pub fn run(args: ScreenArgs, resolved: ResolvedConfig) -> anyhow::Result<i32> {
    let prompt = read_prompt(&args)?;
    let engine = Engine::new(resolved.config).context("building engine")?;
    let result = engine.screen(&prompt)?;
    let admission = match &args.review_queue {
        Some(path) => Some(offer(path, &prompt, &result, &engine)?),
        None => None,
    };
    render(&args, &engine, &result, admission);
    Ok(if result.is_attack() { EXIT_FLAGGED } else { EXIT_OK })
}

fn read_prompt(args: &ScreenArgs) -> anyhow::Result<String> {
    if let Some(text) = &args.text {
        return Ok(text.clone());
    }
    if let Some(path) = &args.file {
        return std::fs::read_to_string(path)
            .with_context(|| format!("reading {}", path.display()));
    }
    let mut prompt = String::new();
    std::io::stdin()
        .read_to_string(&mut prompt)
        .context("reading stdin")?;
    Ok(prompt)
}

/// Loads (or starts) the queue file, offers the result, and persists the
/// queue again if it changed.
fn offer(
    path: &Path,
    prompt: &str,
    result: &DetectionResult,
    engine: &Engine,
) -> anyhow::Result<Admission> {
    let settings = &engine.config().review;
    let queue = if path.exists() {
        ReviewQueue::load(path, settings.capacity, settings.min_uncertainty)
            .with_context(|| format!("loading review queue {}", path.display()))?
    } else {
        ReviewQueue::from_settings(settings)
    };
    let admission = queue.consider(prompt, result, engine.config())?;
    if admission.admitted() {
        queue
            .save(path)
            .with_context(|| format!("saving review queue {}", path.display()))?;
    }
    Ok(admission)
}

fn render(args: &ScreenArgs, engine: &Engine, result: &DetectionResult, admission: Option<Admission>) {
    match args.format {
        Format::Json => {
            let mut body = serde_json::json!({
                "engine_version": engine.version(),
                "result": result,
            });
            if let Some(admission) = &admission {
                body["review"] = match admission.sequence() {
                    Some(sequence) => serde_json::json!({ "queued": true, "sequence": sequence }),
                    None => serde_json::json!({ "queued": false }),
                };
            }
            println!("{}", serde_json::to_string_pretty(&body).expect("results serialize"));
        }
        Format::Text => {
            if args.explain {
                print!("{}", engine.explain(result));
            } else {
                let attack = if result.is_attack() { " (attack)" } else { "" };
                println!("verdict: {}{attack}", result.verdict);
                for (category, score) in &result.category_scores {
                    let threshold = engine.config().thresholds.get(*category).unwrap_or(f64::NAN);
                    let marker = if *category == result.verdict { "  <- verdict" } else { "" };
                    println!("  {category:<22} {score:>8.4}  (threshold {threshold:.2}){marker}");
                }
            }
            match admission {
                Some(Admission::Queued { sequence }) => {
                    println!("review: queued as sequence {sequence}");
                }
                Some(Admission::Replaced { sequence, evicted }) => {
                    println!(
                        "review: queued as sequence {sequence}, evicting sequence {}",
                        evicted.sequence
                    );
                }
                Some(Admission::BelowFloor) => {
                    println!("review: not queued (uncertainty below the floor)");
                }
                Some(Admission::Rejected) => {
                    println!("review: not queued (queue full of less certain items)");
                }
                None => {}
            }
        }
    }
}
