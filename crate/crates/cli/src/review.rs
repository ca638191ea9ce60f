//! `sentinel review`: the human-in-the-loop batch workflow. Screening runs
//! append uncertain results to a queue file; an operator lists and labels
//! them; labels are staged as new config-store versions; pointing production
//! at a version stays a separate, explicit `activate`.

use std::collections::BTreeSet;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use sentinel_core::adaptive::{
    feedback_mutation, ConfigStore, FeedbackTarget, ReviewItem, ReviewQueue, ReviewStatus,
    PATTERN_SLOTS,
};
use sentinel_core::engine::Engine;
use sentinel_core::types::AttackCategory;

use crate::{config, EXIT_OK};

#[derive(clap::Subcommand)]
pub enum ReviewCommand {
    /// Show the pending items in a review-queue file, most uncertain first.
    List(ListArgs),
    /// Attach a category to one pending item and move it to the labeled file.
    Label(LabelArgs),
    /// Create a versioned config store seeded from the current config.
    Init(InitArgs),
    /// Stage labeled items as one new config-store version (not yet active).
    Apply(ApplyArgs),
    /// Point the store's active marker at a version, or roll back one step.
    Activate(ActivateArgs),
}

#[derive(clap::Args)]
pub struct ListArgs {
    /// Review-queue file written by `screen --review-queue`.
    #[arg(long, value_name = "PATH")]
    queue: PathBuf,
    #[arg(long, value_enum, default_value_t = Format::Text)]
    format: Format,
}

#[derive(Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Format {
    Text,
    Json,
}

#[derive(clap::Args)]
pub struct LabelArgs {
    #[arg(long, value_name = "PATH")]
    queue: PathBuf,
    /// File the labeled item is appended to (created on first use).
    #[arg(long, value_name = "PATH")]
    labeled: PathBuf,
    /// Sequence number shown by `review list`.
    #[arg(value_name = "SEQUENCE")]
    sequence: u64,
    /// The reviewer's category; `benign` records a false positive.
    #[arg(value_name = "CATEGORY")]
    category: AttackCategory,
}

#[derive(clap::Args)]
pub struct InitArgs {
    /// Directory for the store; must not already hold one.
    #[arg(long, value_name = "DIR")]
    store: PathBuf,
}

#[derive(clap::Args)]
pub struct ApplyArgs {
    /// Labeled-items file written by `review label`.
    #[arg(long, value_name = "PATH")]
    labeled: PathBuf,
    #[arg(long, value_name = "DIR")]
    store: PathBuf,
    /// Where feedback lands: `reference` grows the similarity reference
    /// corpus; `pattern:<set>` adds a literal matcher to that pattern set.
    #[arg(long, default_value = "reference", value_name = "TARGET")]
    target: String,
    /// Apply only these sequences (comma-separated). Default: all.
    #[arg(long, value_delimiter = ',', value_name = "SEQ")]
    sequence: Vec<u64>,
}

#[derive(clap::Args)]
pub struct ActivateArgs {
    #[arg(long, value_name = "DIR")]
    store: PathBuf,
    /// Version to activate. Default: the highest staged version.
    #[arg(long, value_name = "N", conflicts_with = "rollback")]
    version: Option<u32>,
    /// Re-activate the highest version below the currently active one.
    #[arg(long)]
    rollback: bool,
}

pub fn run(command: ReviewCommand, config_flag: Option<&Path>) -> anyhow::Result<i32> {
    match command {
        ReviewCommand::List(args) => list(args),
        ReviewCommand::Label(args) => label(args),
        ReviewCommand::Init(args) => init(args, config_flag),
        ReviewCommand::Apply(args) => apply(args),
        ReviewCommand::Activate(args) => activate(args),
    }
}

/// Opens a queue file for maintenance. Capacity and floor only govern new
/// offers (and are not persisted), so maintenance loads with no limits: a
/// queue saved under a larger capacity must still be listable and labelable.
fn open_queue(path: &Path) -> anyhow::Result<ReviewQueue> {
    ReviewQueue::load(path, usize::MAX, 0.0)
        .with_context(|| format!("loading review queue {}", path.display()))
}

fn list(args: ListArgs) -> anyhow::Result<i32> {
    let queue = open_queue(&args.queue)?;
    let items = queue.snapshot();
    match args.format {
        Format::Json => {
            println!("{}", serde_json::to_string_pretty(&items).expect("items serialize"));
        }
        Format::Text => {
            if items.is_empty() {
                println!("queue is empty");
            } else {
                println!("{:>5}  {:>11}  {:<22} {:<20}  text", "seq", "uncertainty", "verdict", "submitted");
                for item in &items {
                    println!(
                        "{:>5}  {:>11.4}  {:<22} {:<20}  {}",
                        item.sequence,
                        item.uncertainty,
                        item.verdict().to_string(),
                        item.submitted_at.format("%Y-%m-%dT%H:%M:%SZ"),
                        preview(&item.text),
                    );
                }
            }
        }
    }
    Ok(EXIT_OK)
}

fn preview(text: &str) -> String {
    let oneline: String = text
        .chars()
        .map(|c| if c == '\n' || c == '\r' { ' ' } else { c })
        .collect();
    if oneline.chars().count() > 60 {
        let cut: String = oneline.chars().take(59).collect();
        format!("{cut}…")
    } else {
        oneline
    }
}

fn label(args: LabelArgs) -> anyhow::Result<i32> {
    let queue = open_queue(&args.queue)?;
    let item = queue.label(args.sequence, args.category)?;
    queue
        .save(&args.queue)
        .with_context(|| format!("saving review queue {}", args.queue.display()))?;
    let mut file = std::fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(&args.labeled)
        .with_context(|| format!("opening labeled file {}", args.labeled.display()))?;
    writeln!(file, "{}", serde_json::to_string(&item).expect("items serialize"))
        .with_context(|| format!("appending to {}", args.labeled.display()))?;
    println!(
        "sequence {} labeled {}; {} item(s) still pending",
        args.sequence,
        args.category,
        queue.len()
    );
    Ok(EXIT_OK)
}

fn init(args: InitArgs, config_flag: Option<&Path>) -> anyhow::Result<i32> {
    let resolved = config::resolve(config_flag)?;
    let store = ConfigStore::init(&args.store, &resolved.config)?;
    println!(
        "initialized config store at {} (version 1 active)",
        store.root().display()
    );
    Ok(EXIT_OK)
}

fn parse_target(raw: &str) -> anyhow::Result<FeedbackTarget> {
    if raw == "reference" {
        return Ok(FeedbackTarget::ReferenceCorpus);
    }
    if let Some(set) = raw.strip_prefix("pattern:") {
        if set.is_empty() {
            bail!("pattern target names no set; available: {}", PATTERN_SLOTS.join(", "));
        }
        return Ok(FeedbackTarget::PatternSet { set: set.to_owned() });
    }
    bail!("unknown target `{raw}`: use `reference` or `pattern:<set>` (sets: {})", PATTERN_SLOTS.join(", "));
}

fn apply(args: ApplyArgs) -> anyhow::Result<i32> {
    let target = parse_target(&args.target)?;
    let store = ConfigStore::open(&args.store)?;
    let items = read_labeled(&args.labeled)?;

    let selected: Vec<&ReviewItem> = if args.sequence.is_empty() {
        items.iter().collect()
    } else {
        let mut picked = Vec::new();
        for sequence in &args.sequence {
            match items.iter().find(|i| i.sequence == *sequence) {
                Some(item) => picked.push(item),
                None => bail!("sequence {sequence} is not in {}", args.labeled.display()),
            }
        }
        picked
    };
    if selected.is_empty() {
        bail!("{} holds no labeled items", args.labeled.display());
    }

    // All mutations go into one staged version; staging builds from the
    // active version, so chaining one stage per item would drop all but the
    // last. Benign labels and dismissals are consumed without a mutation —
    // they recorded a false positive, there is nothing to append.
    let mut mutations = Vec::new();
    let mut consumed: BTreeSet<u64> = BTreeSet::new();
    let mut noted = 0;
    for item in &selected {
        match item.status {
            ReviewStatus::Labeled(AttackCategory::Benign) | ReviewStatus::Dismissed => {
                println!("sequence {}: false positive recorded; nothing to stage", item.sequence);
                consumed.insert(item.sequence);
                noted += 1;
            }
            ReviewStatus::Labeled(_) => {
                mutations.push(feedback_mutation(item, &target)?);
                consumed.insert(item.sequence);
            }
            ReviewStatus::Pending => {
                bail!("sequence {} is still pending; label it first", item.sequence)
            }
        }
    }

    let staged = if mutations.is_empty() {
        None
    } else {
        Some(store.stage(&mutations)?)
    };

    let remaining: Vec<&ReviewItem> = items
        .iter()
        .filter(|i| !consumed.contains(&i.sequence))
        .collect();
    write_labeled(&args.labeled, &remaining)?;

    match staged {
        Some(version) => {
            println!(
                "staged version {version} from {} label(s) ({noted} false positive(s) recorded)",
                mutations.len()
            );
            println!(
                "activate with: sentinel review activate --store {} --version {version}",
                args.store.display()
            );
        }
        None => println!("nothing to stage ({noted} false positive(s) recorded)"),
    }
    Ok(EXIT_OK)
}

fn activate(args: ActivateArgs) -> anyhow::Result<i32> {
    let store = ConfigStore::open(&args.store)?;
    let version = if args.rollback {
        let version = store.rollback()?;
        println!("rolled back: version {version} active");
        version
    } else {
        let version = match args.version {
            Some(version) => version,
            None => *store.versions()?.last().expect("a store always has a version"),
        };
        store.activate(version)?;
        println!("version {version} active");
        version
    };
    let engine = Engine::new(store.load_version(version)?)?;
    println!("engine {}", engine.version());
    Ok(EXIT_OK)
}

fn read_labeled(path: &Path) -> anyhow::Result<Vec<ReviewItem>> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading labeled items from {}", path.display()))?;
    let mut items = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        let item: ReviewItem = serde_json::from_str(line)
            .with_context(|| format!("{}:{}: bad review item", path.display(), lineno + 1))?;
        items.push(item);
    }
    Ok(items)
}

fn write_labeled(path: &Path, items: &[&ReviewItem]) -> anyhow::Result<()> {
    let mut out = String::new();
    for item in items {
        out.push_str(&serde_json::to_string(item).expect("items serialize"));
        out.push('\n');
    }
    std::fs::write(path, out).with_context(|| format!("rewriting {}", path.display()))
}
