//! Command-line pipeline around the `spex` library.
//!
//! Exit codes: 0 on success, 1 for usage errors (bad flags, bad config), 2 for
//! data errors (unreadable or malformed inputs, training failures).

use std::fmt;
use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};

pub mod commands;
pub mod config;
pub mod output;

/// A problem with how the tool was invoked rather than with its data.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

#[derive(Debug, Parser)]
#[command(
    name = "spex",
    version,
    about = "Sparse disentangled embeddings and exclusion retrieval",
    after_help = "Settings are layered: built-in defaults, then --config <file.toml>, then \
                  --section.key=value flags (sections: sae, bi, retrieval, eval, synth).\n\
                  Log verbosity is read from SPEX_LOG (error, warn, info, debug)."
)]
pub struct Cli {
    /// TOML file with settings overriding the defaults.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModalityArg {
    Image,
    Text,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Method {
    /// Dimension-set subtraction over sparse image representations.
    Sr,
    /// Dense baseline: population mean of A minus population mean of B.
    AvgEmb,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train the word autoencoder and export sparse word embeddings.
    TrainWords {
        /// Word vectors, one `token v1 .. vm` line per word.
        #[arg(long)]
        words: PathBuf,
        /// Autoencoder checkpoint.
        #[arg(long)]
        out: PathBuf,
        /// Sparse word embeddings (SEMB).
        #[arg(long)]
        sparse_out: PathBuf,
    },
    /// Mean-pool sparse word embeddings into caption embeddings.
    EmbedCaptions {
        /// Captions, JSON lines `{"image_id", "caption"}`.
        #[arg(long)]
        captions: PathBuf,
        /// Sparse word embeddings (SEMB).
        #[arg(long)]
        words: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the image/text encoder pair.
    TrainBiencoder {
        /// Dense image embeddings (DEMB).
        #[arg(long)]
        images: PathBuf,
        /// Dense caption embeddings keyed `imageid#k` (DEMB).
        #[arg(long)]
        texts: PathBuf,
        /// Captions (JSON lines); defines the image/caption pairs.
        #[arg(long)]
        captions: PathBuf,
        /// Sparse caption embeddings guiding the masks. Without them only the
        /// top-t mask is used.
        #[arg(long)]
        caption_embeddings: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Encode a dense corpus into sparse representations.
    EncodeCorpus {
        /// Encoder-pair checkpoint.
        #[arg(long)]
        model: PathBuf,
        /// Dense embeddings (DEMB).
        #[arg(long)]
        input: PathBuf,
        #[arg(long, value_enum)]
        modality: ModalityArg,
        /// Sparse caption embeddings. Image records are guided by the mean of
        /// their captions, text records by their own caption.
        #[arg(long)]
        guides: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Build an inverted index over sparse embeddings and report its postings.
    Index {
        /// Sparse embeddings (SEMB).
        #[arg(long)]
        input: PathBuf,
        /// JSON summary.
        #[arg(long)]
        out: PathBuf,
    },
    /// Rank images for a single label.
    Query {
        /// Sparse image representations (SEMB).
        #[arg(long)]
        index: PathBuf,
        #[arg(long)]
        model: PathBuf,
        /// Dense text embeddings of label names (DEMB).
        #[arg(long)]
        label_embeddings: PathBuf,
        /// Sparse word embeddings used as the query mask guide.
        #[arg(long)]
        words: Option<PathBuf>,
        #[arg(long)]
        label: String,
        /// Ranked run file.
        #[arg(long)]
        out: PathBuf,
    },
    /// Answer "A but not B" queries.
    Exclude {
        #[arg(long, value_enum, default_value = "sr")]
        method: Method,
        /// Exclusion queries (JSON lines), as written by build-eval.
        #[arg(long, conflicts_with_all = ["include", "exclude"])]
        queries: Option<PathBuf>,
        #[arg(long, requires = "exclude")]
        include: Option<String>,
        #[arg(long, requires = "include")]
        exclude: Option<String>,
        /// Sparse image representations (SEMB); method sr.
        #[arg(long)]
        index: Option<PathBuf>,
        /// Encoder-pair checkpoint; method sr.
        #[arg(long)]
        model: Option<PathBuf>,
        /// Sparse word embeddings guiding label queries; method sr.
        #[arg(long)]
        words: Option<PathBuf>,
        /// Dense image embeddings (DEMB); method avg-emb.
        #[arg(long)]
        images: Option<PathBuf>,
        /// Dense text embeddings of label names (DEMB).
        #[arg(long)]
        label_embeddings: PathBuf,
        /// Ranked run file.
        #[arg(long)]
        out: PathBuf,
    },
    /// Derive exclusion queries from labeled images.
    BuildEval {
        /// Labeled images, JSON lines `{"image_id", "labels"}`.
        #[arg(long)]
        labels: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score a ranked run against exclusion queries.
    Evaluate {
        #[arg(long)]
        run: PathBuf,
        #[arg(long)]
        queries: PathBuf,
        /// Text report.
        #[arg(long)]
        out: PathBuf,
        /// Also write the report as JSON.
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Generate the synthetic labeled corpus.
    Synth {
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Paired t-test between two runs on one metric.
    Compare {
        #[arg(long)]
        run_a: PathBuf,
        #[arg(long)]
        run_b: PathBuf,
        #[arg(long)]
        queries: PathBuf,
        /// JSON result.
        #[arg(long)]
        out: PathBuf,
    },
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::TrainWords { .. } => "train-words",
            Command::EmbedCaptions { .. } => "embed-captions",
            Command::TrainBiencoder { .. } => "train-biencoder",
            Command::EncodeCorpus { .. } => "encode-corpus",
            Command::Index { .. } => "index",
            Command::Query { .. } => "query",
            Command::Exclude { .. } => "exclude",
            Command::BuildEval { .. } => "build-eval",
            Command::Evaluate { .. } => "evaluate",
            Command::Synth { .. } => "synth",
            Command::Compare { .. } => "compare",
        }
    }
}

/// Exit status for an error returned by [`commands::run`].
pub fn exit_code(err: &anyhow::Error) -> u8 {
    if err.downcast_ref::<UsageError>().is_some() {
        1
    } else {
        2
    }
}

/// Parses `args` (program name first) and runs the subcommand. Returns the
/// process exit status.
pub fn main_with_args(args: Vec<String>) -> u8 {
    let (rest, flags) = config::split_config_flags(args);
    let cli = match Cli::try_parse_from(rest) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match commands::run(cli, &flags) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e:#}");
            exit_code(&e)
        }
    }
}
