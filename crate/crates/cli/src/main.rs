//! `kinegraph` command-line front end.
//!
//! Every command writes canonical JSON plus a `<output>.manifest.json`
//! sidecar. Exit codes: 0 success, 2 bad input, 3 numerical failure.

mod commands;
mod error;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::error::CliError;

#[derive(Parser)]
#[command(
    name = "kinegraph",
    version,
    about = "Skeleton action recognition toolkit"
)]
struct Cli {
    /// Seed for every random choice a command makes.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Worker threads (defaults to the number of cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Suppress progress notes on stderr.
    #[arg(long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Convert an NTU skeleton file or canonical JSON to canonical JSON.
    Parse(ParseArgs),
    /// Build the GPR distance graph and class templates from embeddings.
    Graphs(GraphsArgs),
    /// Select bones minimizing the mean bone-length variation.
    SelectBones(SelectBonesArgs),
    /// Diffuse an attention matrix over several hops.
    Diffuse(DiffuseArgs),
    /// Check the eigenvalue relation of the multi-hop power sum.
    Spectra(SpectraArgs),
    /// Score sequences with a model.
    Forward(ForwardArgs),
    /// Train a small model with finite-difference gradients.
    MicroTrain(MicroTrainArgs),
    /// Fuse per-stream scores by summing softmax probabilities.
    Ensemble(EnsembleArgs),
    /// Bone statistics of a dataset: score matrix, physical and selected sums.
    Report(ReportArgs),
}

#[derive(Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum InputFormat {
    Ntu,
    Json,
}

#[derive(Args, Serialize)]
struct ParseArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long, value_enum, default_value = "ntu")]
    format: InputFormat,
    #[arg(long)]
    #[serde(skip)]
    out: PathBuf,
    /// Body to extract from a multi-body NTU record.
    #[arg(long, default_value_t = 0)]
    body: usize,
    /// Resample to this many frames and center on `--center-joint`.
    #[arg(long)]
    target_frames: Option<usize>,
    #[arg(long, default_value_t = 0)]
    center_joint: usize,
    /// Write shortest round-trip floats instead of 9 significant digits.
    #[arg(long)]
    full_precision: bool,
}

#[derive(Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum Similarity {
    Cosine,
    Euclidean,
}

#[derive(Args, Serialize)]
struct GraphsArgs {
    #[arg(long)]
    embeddings: PathBuf,
    #[arg(long)]
    #[serde(skip)]
    out_gpr: PathBuf,
    #[arg(long)]
    #[serde(skip)]
    out_tc: PathBuf,
    #[arg(long, value_enum, default_value = "cosine")]
    similarity: Similarity,
}

#[derive(Args, Serialize)]
struct SelectBonesArgs {
    /// Directory of `.skeleton` / canonical `.json` files, or one dataset file.
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    gpr: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    base: usize,
    /// Maximize instead of minimize the summed scores.
    #[arg(long)]
    max: bool,
    #[arg(long)]
    #[serde(skip)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum Mode {
    Exact,
    Iter,
}

#[derive(Args, Serialize)]
struct DiffuseArgs {
    #[arg(long)]
    abar: PathBuf,
    /// Node features `F` (V × C); the identity when absent.
    #[arg(long)]
    features: Option<PathBuf>,
    #[arg(long, default_value_t = 0.5)]
    beta: f64,
    #[arg(long, default_value_t = 4)]
    hops: usize,
    #[arg(long, value_enum, default_value = "exact")]
    mode: Mode,
    #[arg(long = "K", default_value_t = 20)]
    k: usize,
    #[arg(long)]
    #[serde(skip)]
    out: PathBuf,
}

#[derive(Args, Serialize)]
struct SpectraArgs {
    #[arg(long)]
    abar: PathBuf,
    #[arg(long, default_value_t = 0.5)]
    beta: f64,
    #[arg(long, default_value_t = 200)]
    trunc: usize,
    /// Use the matrix as given instead of symmetrizing and normalizing it.
    #[arg(long)]
    raw: bool,
    /// Defaults to the input path with a `.spectra.json` extension.
    #[arg(long)]
    #[serde(skip)]
    report: Option<PathBuf>,
}

#[derive(Args, Serialize)]
struct ForwardArgs {
    /// Model file `{config, params}`; parameters are seeded when absent.
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    #[serde(skip)]
    out_scores: PathBuf,
}

#[derive(Args, Serialize)]
struct MicroTrainArgs {
    #[arg(long)]
    config: PathBuf,
    /// Override the configured step count.
    #[arg(long)]
    steps: Option<usize>,
    /// Labeled dataset file; synthesized from the seed when absent.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Embedding file for the class templates; seeded stand-ins when absent.
    #[arg(long)]
    embeddings: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip)]
    trace: PathBuf,
    /// Also write the trained model here.
    #[arg(long)]
    #[serde(skip)]
    model_out: Option<PathBuf>,
}

#[derive(Args, Serialize)]
struct EnsembleArgs {
    #[arg(long, num_args = 1.., required = true)]
    scores: Vec<PathBuf>,
    #[arg(long)]
    #[serde(skip)]
    out: PathBuf,
}

#[derive(Args, Serialize)]
struct ReportArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    gpr: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    base: usize,
    /// Compare against the 25-joint physical skeleton.
    #[arg(long)]
    physical: bool,
    #[arg(long)]
    #[serde(skip)]
    out: PathBuf,
}

pub(crate) struct Globals {
    pub seed: u64,
    pub quiet: bool,
}

impl Globals {
    pub fn note(&self, msg: &str) {
        if !self.quiet {
            eprintln!("{msg}");
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Input(format!("cannot set up {n} threads: {e}")))?;
    }
    let g = Globals {
        seed: cli.seed,
        quiet: cli.quiet,
    };
    match &cli.command {
        Command::Parse(a) => commands::parse(a, &g),
        Command::Graphs(a) => commands::graphs(a, &g),
        Command::SelectBones(a) => commands::select_bones(a, &g),
        Command::Diffuse(a) => commands::diffuse(a, &g),
        Command::Spectra(a) => commands::spectra(a, &g),
        Command::Forward(a) => commands::forward(a, &g),
        Command::MicroTrain(a) => commands::micro_train(a, &g),
        Command::Ensemble(a) => commands::ensemble(a, &g),
        Command::Report(a) => commands::report(a, &g),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion)
                || e.kind() == ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand
            {
                let _ = e.print();
                return if e.kind() == ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand {
                    ExitCode::from(2)
                } else {
                    ExitCode::SUCCESS
                };
            }
            // One line: clap's first line carries the actual complaint.
            let text = e.render().to_string();
            let line = text
                .lines()
                .find(|l| !l.trim().is_empty())
                .unwrap_or("error");
            eprintln!("{}", line.trim());
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.code())
        }
    }
}
