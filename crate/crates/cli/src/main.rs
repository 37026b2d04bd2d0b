//! `pct`: train, run and evaluate pixel-comparison tree cascades.

mod commands;

use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

/// Exit statuses. Clap reports usage errors with status 2 itself.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Status {
    Usage = 2,
    Io = 3,
    Format = 4,
    TrainingAborted = 5,
}

/// An error with the exit status it maps to.
#[derive(Debug)]
pub struct Failure {
    pub status: Status,
    pub error: anyhow::Error,
}

pub type Outcome<T = ()> = Result<T, Failure>;

pub trait WithStatus<T> {
    fn status(self, status: Status) -> Outcome<T>;
}

impl<T, E: Into<anyhow::Error>> WithStatus<T> for Result<T, E> {
    fn status(self, status: Status) -> Outcome<T> {
        self.map_err(|e| Failure {
            status,
            error: e.into(),
        })
    }
}

#[derive(Parser, Debug)]
#[command(name = "pct", version, about = "Pixel-comparison tree cascades for object detection")]
struct Cli {
    /// Worker threads for scanning, mining and split search.
    #[arg(long, global = true, default_value_t = 1)]
    threads: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train a cascade from annotated images and object-free backgrounds.
    Train(TrainArgs),
    /// Detect objects in images.
    Detect(DetectArgs),
    /// Match detections against annotations and print a ROC curve as CSV.
    Eval(EvalArgs),
    /// Detection rate under additive Gaussian noise, as CSV.
    NoiseSweep(NoiseSweepArgs),
    /// Write a synthetic corpus of textured images with discs.
    SynthData(SynthArgs),
    /// Print the structure of a model file.
    Info(InfoArgs),
}

#[derive(Args, Debug, Clone)]
pub struct ScanArgs {
    /// Smallest window side in pixels.
    #[arg(long, default_value_t = 24)]
    pub min_size: i32,
    /// Largest window side in pixels (default: image size).
    #[arg(long)]
    pub max_size: Option<i32>,
    /// Window growth factor between scales.
    #[arg(long, default_value_t = 1.2)]
    pub scale: f64,
    /// Window step as a fraction of the window side.
    #[arg(long, default_value_t = 0.1)]
    pub stride: f64,
    /// Number of in-plane orientations to scan.
    #[arg(long, short = 'n', default_value_t = 1)]
    pub orientations: usize,
    /// Overlap above which raw detections are grouped.
    #[arg(long, default_value_t = 0.3)]
    pub overlap: f64,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    /// Annotation file: `image row col size` per line; image paths are
    /// relative to the file's directory.
    #[arg(long)]
    pub annotations: std::path::PathBuf,
    /// Directory of object-free `.pgm` / `.raw` images.
    #[arg(long)]
    pub backgrounds: std::path::PathBuf,
    /// Stage schedule file: `trees tpr_target negatives` per line.
    /// Defaults to the 20-stage, 305-tree schedule.
    #[arg(long)]
    pub schedule: Option<std::path::PathBuf>,
    /// Negatives per stage for the default schedule.
    #[arg(long, default_value_t = 300_000)]
    pub negatives: usize,
    #[arg(long, default_value_t = 6)]
    pub depth: usize,
    /// Candidate tests drawn per tree node.
    #[arg(long, default_value_t = 256)]
    pub candidates: usize,
    /// Perturbed copies per annotated object.
    #[arg(long, default_value_t = 15)]
    pub augment: usize,
    #[arg(long, default_value_t = 0.05)]
    pub position_jitter: f64,
    #[arg(long, default_value_t = 0.10)]
    pub scale_jitter: f64,
    /// Smallest mined negative window side.
    #[arg(long, default_value_t = 24)]
    pub negative_min_size: i32,
    /// Largest mined negative window side (default: image size).
    #[arg(long)]
    pub negative_max_size: Option<i32>,
    /// Mining budget per requested negative.
    #[arg(long, default_value_t = 100_000)]
    pub draws_per_negative: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output model path.
    #[arg(long, short = 'o')]
    pub out: std::path::PathBuf,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum Format {
    Text,
    Csv,
    Jsonl,
}

#[derive(Args, Debug)]
pub struct DetectArgs {
    #[arg(long, short = 'm')]
    pub model: std::path::PathBuf,
    /// Image files or directories of images.
    #[arg(required = true)]
    pub inputs: Vec<std::path::PathBuf>,
    #[command(flatten)]
    pub scan: ScanArgs,
    #[arg(long, value_enum, default_value_t = Format::Text)]
    pub format: Format,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[arg(long)]
    pub annotations: std::path::PathBuf,
    /// Model to run on the annotated images.
    #[arg(
        long,
        short = 'm',
        conflicts_with = "detections",
        required_unless_present = "detections"
    )]
    pub model: Option<std::path::PathBuf>,
    /// Precomputed detections in `detect` text format.
    #[arg(long)]
    pub detections: Option<std::path::PathBuf>,
    /// Overlap a detection needs with a truth square to match it.
    #[arg(long, default_value_t = 0.3)]
    pub min_overlap: f64,
    #[command(flatten)]
    pub scan: ScanArgs,
}

#[derive(Args, Debug)]
pub struct NoiseSweepArgs {
    #[arg(long)]
    pub annotations: std::path::PathBuf,
    #[arg(long, short = 'm')]
    pub model: std::path::PathBuf,
    /// Comma-separated noise standard deviations, ascending.
    #[arg(long, value_delimiter = ',', default_value = "0,8,16,32")]
    pub sigmas: Vec<f64>,
    #[arg(long, default_value_t = 0.3)]
    pub min_overlap: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub scan: ScanArgs,
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    /// Output directory.
    #[arg(long, short = 'o')]
    pub out: std::path::PathBuf,
    #[arg(long, default_value_t = 100)]
    pub count: usize,
    #[arg(long, default_value_t = 128)]
    pub width: usize,
    #[arg(long, default_value_t = 128)]
    pub height: usize,
    /// Emit object-free images.
    #[arg(long)]
    pub background: bool,
    #[arg(long, default_value_t = 24.0)]
    pub min_diameter: f64,
    #[arg(long, default_value_t = 56.0)]
    pub max_diameter: f64,
    /// Distractor shapes per image.
    #[arg(long, default_value_t = 2)]
    pub clutter: usize,
    /// Per-pixel grain standard deviation.
    #[arg(long, default_value_t = 6.0)]
    pub grain: f64,
    /// Keep objects inside the frame under any rotation about the center.
    #[arg(long)]
    pub rotation_safe: bool,
    /// File name prefix.
    #[arg(long, default_value = "img")]
    pub prefix: String,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Args, Debug)]
pub struct InfoArgs {
    pub model: std::path::PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads.max(1))
        .build_global()
        .status(Status::Usage)
        .and_then(|()| match cli.command {
            Command::Train(a) => commands::train(a, cli.threads),
            Command::Detect(a) => commands::detect(a, cli.threads),
            Command::Eval(a) => commands::eval(a, cli.threads),
            Command::NoiseSweep(a) => commands::noise_sweep(a, cli.threads),
            Command::SynthData(a) => commands::synth_data(a),
            Command::Info(a) => commands::info(a),
        });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.status as u8)
        }
    }
}
