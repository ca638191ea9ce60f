//! `sentinel corpus`: labeled-corpus file utilities.

use std::path::PathBuf;

use sentinel_core::evalkit::LabeledCorpus;

use crate::EXIT_OK;

#[derive(clap::Subcommand)]
pub enum CorpusCommand {
    /// Parse a corpus file, rejecting bad records with their line numbers,
    /// and report its label composition.
    Validate(ValidateArgs),
}

#[derive(clap::Args)]
pub struct ValidateArgs {
    #[arg(long, value_name = "PATH")]
    corpus: PathBuf,
}

pub fn run(command: CorpusCommand) -> anyhow::Result<i32> {
    match command {
        CorpusCommand::Validate(args) => {
            let corpus = LabeledCorpus::load(&args.corpus)?;
            println!("ok: {} item(s)", corpus.len());
            for (label, count) in corpus.label_counts() {
                println!("  {label:<22} {count}");
            }
            let tagged = corpus.items().iter().filter(|i| i.use_case.is_some()).count();
            if tagged > 0 {
                println!("  ({tagged} item(s) carry use-case tags)");
            }
            Ok(EXIT_OK)
        }
    }
}
