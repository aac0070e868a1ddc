mod commands;
mod io;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use discoseq::transition::Scheme;
use discoseq::treebank::Format;

/// Outcome classes, mapped to exit codes 1 to 3.
#[derive(Debug)]
pub enum Failure {
    Usage(anyhow::Error),
    Data(anyhow::Error),
    Internal(anyhow::Error),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Data(_) => 2,
            Failure::Internal(_) => 3,
        }
    }

    fn error(&self) -> &anyhow::Error {
        match self {
            Failure::Usage(e) | Failure::Data(e) | Failure::Internal(e) => e,
        }
    }
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Data(e)
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Data(e.into())
    }
}

#[derive(Parser)]
#[command(name = "discoseq", version, about = "Transition-sequence linearization of (discontinuous) constituency trees")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct TreeInput {
    /// Treebank file, one tree per line (`-` for standard input, `.gz` accepted)
    #[arg(long = "in", value_name = "FILE")]
    input: PathBuf,
    /// Tree format; guessed from the extension when omitted (.mrg/.ptb are bracketed)
    #[arg(long)]
    format: Option<Format>,
}

#[derive(Args)]
struct JobsArg {
    /// Worker threads for per-line parallelism
    #[arg(long, default_value_t = 1)]
    jobs: usize,
}

#[derive(Subcommand)]
enum Command {
    /// Encode each tree as a transition sequence
    Linearize {
        #[arg(long)]
        scheme: Scheme,
        #[command(flatten)]
        input: TreeInput,
        #[arg(long, value_name = "FILE")]
        out: Option<PathBuf>,
        /// Also write the sentences, one per line
        #[arg(long, value_name = "FILE")]
        sentences_out: Option<PathBuf>,
        /// Emit {"sentence", "scheme", "tokens"} objects, one per line
        #[arg(long)]
        jsonl: bool,
        #[command(flatten)]
        jobs: JobsArg,
    },
    /// Rebuild trees from sentences and transition sequences
    Delinearize {
        /// Required unless the token lines are JSON objects carrying their scheme
        #[arg(long)]
        scheme: Option<Scheme>,
        /// Sentence file; omit when the token lines are JSON objects
        #[arg(long, value_name = "FILE")]
        sentences: Option<PathBuf>,
        #[arg(long, value_name = "FILE", default_value = "-")]
        tokens: PathBuf,
        #[arg(long, value_name = "FILE")]
        out: Option<PathBuf>,
        /// Label for constituents created by repairs
        #[arg(long, default_value = "ROOT")]
        fallback_label: String,
        #[command(flatten)]
        jobs: JobsArg,
    },
    /// Check that decoding each encoding gives back the tree
    Roundtrip {
        #[arg(long)]
        scheme: Scheme,
        #[command(flatten)]
        input: TreeInput,
    },
    /// Output vocabulary size and longest sequence per scheme
    Stats {
        /// A scheme, a comma-separated list, or `all`
        #[arg(long, default_value = "all")]
        scheme: String,
        #[command(flatten)]
        input: TreeInput,
        #[arg(long)]
        json: bool,
        /// Also print each dictionary
        #[arg(long)]
        dict: bool,
    },
    /// Print the stack and buffer masks at each step of a derivation
    MaskTrace {
        #[arg(long)]
        scheme: Scheme,
        /// The tree whose oracle derivation is traced
        #[arg(long)]
        tree: String,
        #[arg(long, default_value = "discbracket")]
        format: Format,
        /// Trace this token sequence instead of the oracle's
        #[arg(long)]
        tokens: Option<String>,
        #[arg(long)]
        json: bool,
    },
    /// Labelled bracket precision, recall and F1, overall and discontinuous
    Eval {
        #[arg(long, value_name = "FILE")]
        gold: PathBuf,
        #[arg(long, value_name = "FILE")]
        pred: PathBuf,
        #[arg(long)]
        format: Option<Format>,
        /// Remove punctuation tokens before scoring
        #[arg(long)]
        no_punct: bool,
        /// Do not score the root constituent
        #[arg(long)]
        ignore_root: bool,
        /// Score empty discontinuous sets as 0 instead of 100
        #[arg(long)]
        zero_if_undefined: bool,
        #[arg(long)]
        json: bool,
        #[command(flatten)]
        jobs: JobsArg,
    },
    /// Train a sequence-to-sequence parser and write a checkpoint
    Train {
        #[arg(long)]
        scheme: Scheme,
        #[command(flatten)]
        input: TreeInput,
        #[arg(long, value_name = "FILE")]
        checkpoint: PathBuf,
        /// Configuration preset: toy or large
        #[arg(long, default_value = "toy")]
        preset: String,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        d_model: Option<usize>,
        /// Evaluate training exact match every N epochs (0 = never)
        #[arg(long, default_value_t = 10)]
        eval_every: usize,
        /// Stop once an evaluation reaches 100% exact match
        #[arg(long)]
        until_exact: bool,
        /// Worker threads (default: all cores)
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Parse sentences with a trained checkpoint
    Predict {
        #[arg(long, value_name = "FILE")]
        checkpoint: PathBuf,
        /// Sentence file, one sentence per line
        #[arg(long, value_name = "FILE", conflicts_with = "trees")]
        sentences: Option<PathBuf>,
        /// Take the sentences from a treebank instead
        #[arg(long, value_name = "FILE")]
        trees: Option<PathBuf>,
        #[arg(long)]
        format: Option<Format>,
        #[arg(long, default_value_t = 10)]
        beam: usize,
        #[arg(long, value_name = "FILE")]
        out: Option<PathBuf>,
        /// Also write the predicted token sequences
        #[arg(long, value_name = "FILE")]
        tokens_out: Option<PathBuf>,
        #[arg(long, default_value = "ROOT")]
        fallback_label: String,
        #[command(flatten)]
        jobs: JobsArg,
    },
}

fn run(cli: Cli) -> Result<(), Failure> {
    use commands::*;
    match cli.command {
        Command::Linearize {
            scheme,
            input,
            out,
            sentences_out,
            jsonl,
            jobs,
        } => linearize(scheme, &input.input, input.format, out.as_deref(), sentences_out.as_deref(), jsonl, jobs.jobs),
        Command::Delinearize {
            scheme,
            sentences,
            tokens,
            out,
            fallback_label,
            jobs,
        } => delinearize(scheme, sentences.as_deref(), &tokens, out.as_deref(), fallback_label, jobs.jobs),
        Command::Roundtrip { scheme, input } => roundtrip(scheme, &input.input, input.format),
        Command::Stats {
            scheme,
            input,
            json,
            dict,
        } => stats(&scheme, &input.input, input.format, json, dict),
        Command::MaskTrace {
            scheme,
            tree,
            format,
            tokens,
            json,
        } => mask_trace(scheme, &tree, format, tokens.as_deref(), json),
        Command::Eval {
            gold,
            pred,
            format,
            no_punct,
            ignore_root,
            zero_if_undefined,
            json,
            jobs,
        } => eval(&gold, &pred, format, no_punct, ignore_root, zero_if_undefined, json, jobs.jobs),
        Command::Train {
            scheme,
            input,
            checkpoint,
            preset,
            epochs,
            seed,
            d_model,
            eval_every,
            until_exact,
            jobs,
        } => train(TrainArgs {
            scheme,
            input: input.input,
            format: input.format,
            checkpoint,
            preset,
            epochs,
            seed,
            d_model,
            eval_every,
            until_exact,
            jobs,
        }),
        Command::Predict {
            checkpoint,
            sentences,
            trees,
            format,
            beam,
            out,
            tokens_out,
            fallback_label,
            jobs,
        } => predict(PredictArgs {
            checkpoint,
            sentences,
            trees,
            format,
            beam,
            out,
            tokens_out,
            fallback_label,
            jobs: jobs.jobs,
        }),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            eprintln!("discoseq: {:#}", failure.error());
            ExitCode::from(failure.code())
        }
    }
}
