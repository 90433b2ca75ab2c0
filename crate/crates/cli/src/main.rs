use std::path::PathBuf;
use std::process::ExitCode;

use affectforge::Error;
use clap::{Args, Parser, Subcommand};

mod commands;

#[derive(Debug, Parser)]
#[command(name = "affectforge", version, about = "Noise-robust speech emotion recognition toolkit")]
struct Cli {
    /// Seed for every stochastic step.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// `key = value` experiment configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,
    /// Worker threads.
    #[arg(long, global = true, default_value_t = 1)]
    jobs: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Synthesize white, pink or brown noise.
    SynthNoise {
        #[arg(long)]
        color: String,
        #[arg(long, default_value_t = 3.0)]
        seconds: f64,
        #[arg(long, default_value_t = 16_000)]
        sample_rate: u32,
    },
    /// Mix noise into a clip.
    Inject {
        #[arg(long)]
        input: PathBuf,
        /// A noise color or a WAV file.
        #[arg(long)]
        noise: String,
        /// Discrete level (0.25, 0.5 or 0.75) of peak-normalized noise.
        #[arg(long, conflicts_with = "lambda")]
        alpha: Option<f64>,
        /// Stochastic factor in [0, 0.75]; drawn from the seed when omitted.
        #[arg(long)]
        lambda: Option<f64>,
    },
    /// Write the four-member augmentation of a clip or a manifest.
    Augment {
        /// One clip; needs --label.
        #[arg(long, required_unless_present = "manifest", conflicts_with = "manifest", requires = "label")]
        input: Option<PathBuf>,
        #[arg(long)]
        label: Option<String>,
        /// Augment every row of a manifest and write an augmented manifest.
        #[arg(long)]
        manifest: Option<PathBuf>,
        #[arg(long, default_value = "pink")]
        noise: String,
        #[arg(long, default_value_t = affectforge::augment::DEFAULT_SEMITONES)]
        semitones: f64,
    },
    /// Extract the serialized feature vector of a clip.
    Features {
        /// One WAV file; writes `<stem>_features.csv` in long form.
        #[arg(long, required_unless_present = "manifest", conflicts_with = "manifest")]
        input: Option<PathBuf>,
        /// A manifest; writes `features.csv` with one row per utterance.
        #[arg(long)]
        manifest: Option<PathBuf>,
    },
    /// Generate the synthetic seven-class corpus.
    GenFixtures {
        #[arg(long, default_value_t = 20)]
        per_class: usize,
    },
    /// Train a model on a manifest's training split.
    Train {
        #[command(flatten)]
        data: DataArgs,
    },
    /// Evaluate a checkpoint on a manifest's test split.
    Eval {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// Evaluate across noise colors, intensities and seeds.
    Grid {
        #[command(flatten)]
        data: DataArgs,
        /// Trained checkpoint; a model is trained first when omitted.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long, value_delimiter = ',', default_value = "white,pink,brown")]
        noises: Vec<String>,
        #[arg(long, value_delimiter = ',', default_value = "0,0.25,0.5,0.75")]
        intensities: Vec<f64>,
        #[arg(long, default_value_t = 3)]
        repeats: usize,
    },
    /// Train and compare the four architecture variants.
    Ablate {
        #[command(flatten)]
        data: DataArgs,
        /// Training repeats per variant; scores are averaged.
        #[arg(long, default_value_t = 3)]
        repeats: usize,
    },
    /// Explain one prediction.
    Explain(ExplainArgs),
}

#[derive(Debug, Args)]
struct DataArgs {
    #[arg(long)]
    manifest: PathBuf,
}

#[derive(Debug, Args)]
struct ExplainArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    audio: PathBuf,
    /// shap, scorecam, occlusion or counterfactual.
    #[arg(long)]
    method: String,
    /// Class to explain; defaults to the prediction.
    #[arg(long)]
    target: Option<String>,
    /// Exact Shapley enumeration (at most 20 units).
    #[arg(long)]
    exact: bool,
    /// Contiguous time segments as Shapley units instead of single frames.
    #[arg(long)]
    segments: Option<usize>,
    #[arg(long, default_value_t = 200)]
    permutations: usize,
    #[arg(long, default_value_t = 3)]
    window: usize,
    #[arg(long, default_value_t = 1)]
    stride: usize,
    #[arg(long, default_value_t = 0.2)]
    fraction: f64,
    /// Mask the least salient frames instead of the most salient.
    #[arg(long)]
    bottom: bool,
}

/// Exit status for a library error.
fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Param(_) | Error::Tractability(_) => 2,
        Error::Numeric(_) | Error::Normalization(_) => 4,
        _ => 3,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
