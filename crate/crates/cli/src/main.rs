//! `gtce` command-line interface.
//!
//! Exit codes: 0 success, 1 gradient check failed, 2 input or validation
//! error, 3 numerical failure (zero-probability graph, divergence).

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Parser, Debug)]
#[command(
    name = "gtce",
    version,
    about = "Extended graph-based temporal classification toolkit"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Build a supervision graph from a label sequence (CTC) or from
    /// per-speaker token onsets (multi-speaker).
    BuildGraph(BuildGraphArgs),
    /// Compute the loss, optionally writing gradients.
    Loss(LossArgs),
    /// Compare analytic gradients with central finite differences.
    Gradcheck(GradcheckArgs),
    /// Prefix beam search (or greedy) decoding of (token, speaker) sequences.
    Decode(DecodeArgs),
    /// Viterbi-align a graph to posteriors and print token onsets.
    Align(AlignArgs),
    /// Train the toy model on synthetic data and print the training log.
    TrainDemo(TrainDemoArgs),
}

#[derive(Args, Debug)]
pub struct BuildGraphArgs {
    /// Whitespace-separated label sequence (indices, or symbols with --vocab).
    #[arg(
        long,
        alias = "labels-file",
        conflicts_with = "onsets",
        required_unless_present = "onsets"
    )]
    pub labels: Option<PathBuf>,
    /// Onset file with `frame token speaker` lines.
    #[arg(long, alias = "onsets-file", requires = "energies")]
    pub onsets: Option<PathBuf>,
    /// Comma-separated per-speaker energies; their count is the speaker count.
    #[arg(long, value_delimiter = ',')]
    pub energies: Option<Vec<f64>>,
    /// Alphabet size including blank.
    #[arg(long)]
    pub num_labels: Option<usize>,
    /// Transition class count of a CTC graph.
    #[arg(long, default_value_t = 1)]
    pub num_transitions: usize,
    /// Transition class carried by every edge of a CTC graph.
    #[arg(long, default_value_t = 0)]
    pub transition_class: usize,
    /// Symbol table, one symbol per line; line 0 is blank.
    #[arg(long)]
    pub vocab: Option<PathBuf>,
    /// Output graph file (stdout if omitted).
    #[arg(short, long)]
    pub output: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct LossArgs {
    #[arg(long)]
    pub graph: PathBuf,
    /// Label matrix (frames x labels).
    #[arg(long)]
    pub label_tensor: PathBuf,
    /// Transition matrix (frames x transition classes).
    #[arg(long)]
    pub trans_tensor: PathBuf,
    /// Treat the matrices as unnormalised logits instead of posteriors.
    #[arg(long)]
    pub logits: bool,
    /// Write dL/du here.
    #[arg(long)]
    pub grad_label: Option<PathBuf>,
    /// Write dL/dh here.
    #[arg(long)]
    pub grad_trans: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct GradcheckArgs {
    /// Graph file; a random instance drawn from --seed is used when omitted.
    #[arg(long, requires_all = ["label_logits", "trans_logits"])]
    pub graph: Option<PathBuf>,
    #[arg(long)]
    pub label_logits: Option<PathBuf>,
    #[arg(long)]
    pub trans_logits: Option<PathBuf>,
    #[arg(long, env = "GTCE_SEED", default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = gtce::loss::gradcheck::DEFAULT_STEP)]
    pub step: f64,
    #[arg(long, default_value_t = gtce::loss::gradcheck::DEFAULT_TOLERANCE)]
    pub tol: f64,
    /// Perturb the analytic gradient before comparing (negative control).
    #[arg(long, hide = true)]
    pub corrupt_analytic: bool,
}

#[derive(Args, Debug)]
pub struct DecodeArgs {
    #[arg(long)]
    pub label_tensor: PathBuf,
    #[arg(long)]
    pub trans_tensor: PathBuf,
    /// Treat the matrices as logits.
    #[arg(long)]
    pub logits: bool,
    #[arg(long)]
    pub speakers: usize,
    #[arg(long, default_value_t = gtce::decoder::DEFAULT_BEAM)]
    pub beam: usize,
    /// Bigram LM file (`prev token logprob` lines).
    #[arg(long)]
    pub lm: Option<PathBuf>,
    #[arg(long, default_value_t = 0.0)]
    pub lm_weight: f64,
    /// Number of ranked results to print.
    #[arg(long, default_value_t = 1)]
    pub nbest: usize,
    /// Greedy decoding instead of beam search.
    #[arg(long, conflicts_with_all = ["lm", "nbest"])]
    pub greedy: bool,
    /// Symbol table; adds per-speaker text to the output.
    #[arg(long)]
    pub vocab: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct AlignArgs {
    #[arg(long)]
    pub graph: PathBuf,
    #[arg(long)]
    pub label_tensor: PathBuf,
    #[arg(long)]
    pub trans_tensor: PathBuf,
    /// Speaker index written in the onset lines.
    #[arg(long, default_value_t = 0)]
    pub speaker: usize,
}

#[derive(Args, Debug)]
pub struct TrainDemoArgs {
    #[arg(long, env = "GTCE_SEED", default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 200)]
    pub epochs: usize,
    #[arg(long, default_value_t = 0.1)]
    pub lr: f64,
    #[arg(long, default_value_t = 0.0)]
    pub overlap: f64,
    #[arg(long, default_value_t = 16)]
    pub utterances: usize,
    #[arg(long, default_value_t = 2)]
    pub speakers: usize,
    /// Alphabet size including blank.
    #[arg(long, default_value_t = 5)]
    pub vocab: usize,
    #[arg(long, default_value_t = 40)]
    pub frames: usize,
    #[arg(long, default_value_t = 4)]
    pub tokens_per_speaker: usize,
    #[arg(long, default_value_t = 0.1)]
    pub noise: f64,
    /// Write the trained model as `<prefix>.label.tensor` / `<prefix>.trans.tensor`.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::BuildGraph(a) => commands::build_graph(a),
        Command::Loss(a) => commands::loss(a),
        Command::Gradcheck(a) => commands::gradcheck(a),
        Command::Decode(a) => commands::decode(a),
        Command::Align(a) => commands::align(a),
        Command::TrainDemo(a) => commands::train_demo(a),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}
