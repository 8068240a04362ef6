//! `bookqa`: one entry point for every stage of the pipeline.
//!
//! Exit status is 0 on success, 1 for usage or configuration errors, 2 for
//! invalid data and 3 for runtime failures. Failures print a single
//! `error[<kind>]: <message>` line on stderr.

mod commands;
mod config;
mod error;
mod outputs;

use std::path::PathBuf;
use std::process::ExitCode;

use bookqa_core::harness::{BaselineKind, SweepParam};
use clap::error::ErrorKind;
use clap::{Args, CommandFactory, Parser, Subcommand};

use config::{parse_retrieval, RunConfig};
use error::{CliError, Kind};

#[derive(Debug, Parser)]
#[command(name = "bookqa", version, about = "Character-answer question answering over annotated books")]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct GlobalArgs {
    /// key = value run configuration
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Master seed; every stage seed derives from it
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker thread cap
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[arg(long, global = true, value_parser = parse_retrieval)]
    retrieval: Option<bookqa_core::harness::RetrievalMethod>,
    #[arg(long, global = true)]
    hops: Option<usize>,
    #[arg(long, global = true)]
    context_sentences: Option<usize>,
    #[arg(long, global = true)]
    pretrain_fraction: Option<f64>,
    #[arg(long, global = true)]
    pretrain_epochs: Option<usize>,
    #[arg(long, global = true)]
    folds: Option<usize>,
    #[arg(long, global = true)]
    trials: Option<usize>,
    /// Output directory
    #[arg(long, global = true, value_name = "DIR")]
    output: Option<PathBuf>,
    /// Directory of book JSON Lines files
    #[arg(long, global = true, value_name = "DIR")]
    books: Option<PathBuf>,
    #[arg(long, global = true, value_name = "PATH")]
    questions: Option<PathBuf>,
    /// Artificial questions to use instead of generating them
    #[arg(long, global = true, value_name = "PATH")]
    artificial: Option<PathBuf>,
    /// Embedding file to use instead of training skip-gram vectors
    #[arg(long, global = true, value_name = "PATH")]
    embeddings: Option<PathBuf>,
    /// Index snapshot for `retrieve`
    #[arg(long, global = true, value_name = "PATH")]
    index: Option<PathBuf>,
    #[arg(long, global = true, value_name = "PATH")]
    external_scores: Option<PathBuf>,
    /// Only log warnings and errors
    #[arg(short, long, global = true)]
    quiet: bool,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Check books and questions and print summary counts
    Validate,
    /// Write a seeded synthetic corpus
    Synth(SynthArgs),
    /// Build and snapshot the passage index
    Index,
    /// Write the selected context of every question
    Retrieve,
    /// Train skip-gram embeddings over the books
    Embed,
    /// Generate artificial questions from the book parses
    Genqa,
    /// Pretrain a model on artificial questions
    Pretrain,
    /// Train a model on every question
    Train(TrainArgs),
    /// Run the cross-validated experiment
    Evaluate,
    /// Run one experiment per value of a parameter
    Sweep(SweepArgs),
    /// Score the model-free baselines on every question
    Baseline(BaselineArgs),
    /// Selective precision over a grid of confidence thresholds
    Gate(GateArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 10)]
    pub book_count: usize,
    #[arg(long, default_value_t = 200)]
    pub sentences: usize,
    #[arg(long, default_value_t = 8)]
    pub characters: usize,
    #[arg(long, default_value_t = 100)]
    pub question_count: usize,
    #[arg(long, default_value_t = 24)]
    pub facts: usize,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Checkpoint to finetune from
    #[arg(long, value_name = "PATH")]
    pub init: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long, value_parser = |s: &str| SweepParam::parse(s).ok_or("expected hops, context_sentences, pretrain_fraction or pretrain_epochs"))]
    pub param: SweepParam,
    #[arg(long, value_delimiter = ',', required = true)]
    pub values: Vec<f64>,
}

#[derive(Debug, Args)]
pub struct BaselineArgs {
    /// One baseline; all of them when omitted
    #[arg(long, value_parser = |s: &str| BaselineKind::parse(s).ok_or("expected random, book_freq or context_freq"))]
    pub kind: Option<BaselineKind>,
}

#[derive(Debug, Args)]
pub struct GateArgs {
    /// Predictions written by `evaluate`; defaults to the output directory's
    #[arg(long, value_name = "PATH")]
    pub predictions: Option<PathBuf>,
    /// Arm to gate; the pretrained arm if present, else the plain model
    #[arg(long)]
    pub arm: Option<String>,
    #[arg(long, value_delimiter = ',', default_value = "0,0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9")]
    pub thresholds: Vec<f64>,
}

impl GlobalArgs {
    fn apply(&self, cfg: &mut RunConfig) {
        let e = &mut cfg.experiment;
        macro_rules! set {
            ($($flag:ident => $target:expr),* $(,)?) => {$(
                if let Some(v) = self.$flag.clone() {
                    $target = v;
                }
            )*};
        }
        set! {
            seed => e.seed,
            retrieval => e.retrieval,
            hops => e.hops,
            context_sentences => e.context_sentences,
            pretrain_fraction => e.pretrain_fraction,
            pretrain_epochs => e.pretrain.epochs,
            folds => e.folds,
            trials => e.trials,
        }
        let p = &mut cfg.paths;
        for (flag, target) in [
            (&self.output, &mut p.output),
            (&self.books, &mut p.books),
            (&self.questions, &mut p.questions),
            (&self.artificial, &mut p.artificial),
            (&self.embeddings, &mut p.embeddings),
            (&self.index, &mut p.index),
            (&self.external_scores, &mut p.external_scores),
        ] {
            if flag.is_some() {
                *target = flag.clone();
            }
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let mut cfg = match &cli.global.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    cli.global.apply(&mut cfg);
    cfg.experiment.validate()?;
    log::info!("config {} seed {}", cfg.experiment.hash(), cfg.experiment.seed);

    bookqa_core::par::with_jobs(cli.global.jobs, move || match cli.command {
        Command::Validate => commands::validate(&cfg),
        Command::Synth(a) => commands::synth(&cfg, &a),
        Command::Index => commands::index(&cfg),
        Command::Retrieve => commands::retrieve(&cfg),
        Command::Embed => commands::embed(&cfg),
        Command::Genqa => commands::genqa(&cfg),
        Command::Pretrain => commands::pretrain(&cfg),
        Command::Train(a) => commands::train(&cfg, &a),
        Command::Evaluate => commands::evaluate(&cfg),
        Command::Sweep(a) => commands::sweep(&cfg, &a),
        Command::Baseline(a) => commands::baseline(&cfg, &a),
        Command::Gate(a) => commands::gate(&cfg, &a),
    })
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let text = e.render().to_string();
            let first = text.lines().next().unwrap_or_default().trim_start_matches("error: ");
            eprintln!("{}", CliError::new(Kind::Usage, first));
            eprintln!("\n{}\n\nFor more information, try '--help'.", Cli::command().render_usage());
            return ExitCode::from(Kind::Usage.exit_code());
        }
    };
    let level = if cli.global.quiet { "warn" } else { "info" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.kind.exit_code())
        }
    }
}
