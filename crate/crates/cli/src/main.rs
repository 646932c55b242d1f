mod commands;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "ndna", version, about = "Latent-trajectory diagnostics for layered models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Per-layer diagnostics profile of one trajectory.
    Analyze {
        file: PathBuf,
        #[command(flatten)]
        score: ScoreArgs,
        /// Emit long-form per-layer series for plotting instead of the report.
        #[arg(long, conflicts_with = "format")]
        plot: bool,
        #[command(flatten)]
        sink: Sink,
    },
    /// Genome distortion between two trajectories, plus output KL when
    /// probability tables are given.
    Compare {
        a: PathBuf,
        b: PathBuf,
        /// JSON list of probability rows for the first model.
        #[arg(long, requires = "probs_b")]
        probs_a: Option<PathBuf>,
        /// JSON list of probability rows for the second model.
        #[arg(long, requires = "probs_a")]
        probs_b: Option<PathBuf>,
        #[command(flatten)]
        sink: Sink,
    },
    /// Merge report for the α-blend of two parents.
    Merge {
        a: PathBuf,
        b: PathBuf,
        #[arg(long)]
        alpha: f64,
        #[arg(long, default_value_t = ndna_core::compare::DEFAULT_DOMINANCE_RATIO)]
        rho: f64,
        /// Gradient bundle measured on the merged model.
        #[arg(long)]
        offspring: Option<PathBuf>,
        #[command(flatten)]
        sink: Sink,
    },
    /// Teacher/student comparison.
    Distill {
        teacher: PathBuf,
        student: PathBuf,
        /// Emit the resampled depth profiles as long-form series.
        #[arg(long, conflicts_with = "format")]
        plot: bool,
        #[command(flatten)]
        sink: Sink,
    },
    /// Collapse classification of one trajectory.
    Collapse {
        file: PathBuf,
        #[command(flatten)]
        thresholds: ThresholdArgs,
        #[command(flatten)]
        sink: Sink,
    },
    /// Rips persistence of the layer-mean cloud (or one layer's tokens).
    Topology {
        file: PathBuf,
        #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u8).range(0..=1))]
        max_dim: u8,
        #[arg(long)]
        max_points: Option<usize>,
        #[arg(long)]
        max_filtration: Option<f64>,
        /// Use the token states of this 0-based layer as the cloud.
        #[arg(long)]
        layer: Option<usize>,
        /// Sheaf consistency with this many patches per layer.
        #[arg(long)]
        patches: Option<usize>,
        /// Second trajectory to compare diagrams against.
        #[arg(long)]
        against: Option<PathBuf>,
        #[arg(long, requires = "against", default_value_t = 0.1)]
        epsilon: f64,
        #[command(flatten)]
        sink: Sink,
    },
    /// Write a synthetic trajectory or a toy-model run.
    Synth {
        /// line, circle, helix, constant, noisy_line or toy.
        kind: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        params: SynthArgs,
    },
    /// Path length, mean curvature and mean belief norm per labeled file.
    Profiles {
        /// `label=path` pairs, or bare paths labeled by file stem.
        #[arg(required = true)]
        inputs: Vec<String>,
        #[command(flatten)]
        sink: Sink,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Debug, Args)]
struct Sink {
    #[arg(long, value_enum, default_value_t = Format::Json)]
    format: Format,
    /// Write to this path instead of standard output.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Weights {
    Uniform,
    Ramp,
    LastK,
    Unit,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Curvature {
    SecondDiff,
    LaplacianRatio,
    LaplacianMeanK,
}

#[derive(Debug, Args)]
struct ScoreArgs {
    #[arg(long, value_enum, default_value_t = Weights::Uniform)]
    weights: Weights,
    #[arg(long, default_value_t = ndna_core::score::DEFAULT_LAST_K)]
    last_k: usize,
    /// Coefficients `a,b,c` of the additive score.
    #[arg(long, value_delimiter = ',', num_args = 3, default_values_t = [1.0, 1.0, 1.0])]
    additive: Vec<f64>,
    #[arg(long, value_enum, default_value_t = Curvature::SecondDiff)]
    curvature: Curvature,
    #[arg(long, default_value_t = 1)]
    laplacian_k: usize,
    #[arg(long, default_value_t = ndna_core::belief::DEFAULT_BINS)]
    bins: usize,
}

#[derive(Debug, Args)]
struct ThresholdArgs {
    #[arg(long, default_value_t = 0.01)]
    length_threshold: f64,
    #[arg(long, default_value_t = 0.01)]
    curvature_threshold: f64,
    #[arg(long, default_value_t = 0.01)]
    belief_threshold: f64,
    #[arg(long, default_value_t = 1.5)]
    rank_threshold: f64,
    #[arg(long, default_value_t = 0.01)]
    lifetime_threshold: f64,
}

#[derive(Debug, Args)]
struct SynthArgs {
    #[arg(long, default_value_t = 16)]
    layers: usize,
    #[arg(long, default_value_t = 8)]
    dim: usize,
    #[arg(long, default_value_t = 0.25)]
    step: f64,
    #[arg(long, default_value_t = 1.0)]
    radius: f64,
    #[arg(long, default_value_t = std::f64::consts::FRAC_PI_8)]
    phi: f64,
    #[arg(long, default_value_t = 0.1)]
    pitch: f64,
    #[arg(long, default_value_t = 0.05)]
    noise: f64,
    /// Toy model: number of inputs.
    #[arg(long, default_value_t = 4)]
    samples: usize,
    /// Toy model: input width.
    #[arg(long, default_value_t = 4)]
    input_dim: usize,
    /// Toy model: probe classes.
    #[arg(long, default_value_t = 3)]
    classes: usize,
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
    ndna_core::par::configure_from_env();
    match commands::run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("ndna: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
