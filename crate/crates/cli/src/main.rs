//! `sentinel` — command-line front end for the screening engine.
//!
//! Every subcommand is a thin adapter over the library: argument parsing,
//! config discovery, and exit-code policy live here; verdicts, metrics, and
//! config versioning come from `sentinel-core` unchanged.

mod config;
mod corpus;
mod evaluate;
mod optimize;
mod review;
mod screen;
mod serve;

use clap::{Parser, Subcommand};

/// Clean run; for `screen`, a benign verdict.
pub(crate) const EXIT_OK: i32 = 0;
/// Usage or operational error (bad flags, unreadable files, invalid config).
pub(crate) const EXIT_ERROR: i32 = 1;
/// The tool worked and the answer is adverse: an attack verdict from
/// `screen`, or a failed quality gate from `evaluate`.
pub(crate) const EXIT_FLAGGED: i32 = 2;

const EXIT_HELP: &str = "Exit codes:
  0  success; for `screen`, a benign verdict
  1  usage or operational error
  2  attack verdict (`screen`) or failed quality gate (`evaluate`)

Config discovery: --config, then $SENTINEL_CONFIG, then ./sentinel.toml,
then built-in defaults.";

#[derive(Parser)]
#[command(
    name = "sentinel",
    version,
    about = "Screen prompts for adversarial intent",
    after_help = EXIT_HELP
)]
struct Cli {
    /// Config file; overrides $SENTINEL_CONFIG and ./sentinel.toml.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<std::path::PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Screen one prompt; the exit code is the verdict.
    Screen(screen::ScreenArgs),
    /// Serve screening over HTTP until SIGTERM or Ctrl-C.
    Serve(serve::ServeArgs),
    /// Score the engine against a labeled corpus, with optional quality gates.
    Evaluate(evaluate::EvaluateArgs),
    /// Grid-search weight cells against a labeled corpus.
    Optimize(optimize::OptimizeArgs),
    /// Work the review loop: queue files, labels, and the config store.
    #[command(subcommand)]
    Review(review::ReviewCommand),
    /// Labeled-corpus file utilities.
    #[command(subcommand)]
    Corpus(corpus::CorpusCommand),
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            let code = match err.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => {
                    EXIT_OK
                }
                _ => EXIT_ERROR,
            };
            let _ = err.print();
            std::process::exit(code);
        }
    };
    match run(cli) {
        Ok(code) => std::process::exit(code),
        Err(err) => {
            eprintln!("sentinel: {err:#}");
            std::process::exit(EXIT_ERROR);
        }
    }
}

fn run(cli: Cli) -> anyhow::Result<i32> {
    let flag = cli.config.as_deref();
    match cli.command {
        Command::Screen(args) => screen::run(args, config::resolve(flag)?),
        Command::Serve(args) => serve::run(args, config::resolve(flag)?),
        Command::Evaluate(args) => evaluate::run(args, config::resolve(flag)?),
        Command::Optimize(args) => optimize::run(args, config::resolve(flag)?),
        Command::Review(command) => review::run(command, flag),
        Command::Corpus(command) => corpus::run(command),
    }
}
