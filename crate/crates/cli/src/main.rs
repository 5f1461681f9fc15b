//! `stp`: synthesize data, build training sets, train the two classifiers,
//! run detection and score it.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use stp_core::corpus::Split;
use stp_core::svm::KernelKind;
use stp_core::Dims;

/// Bad flags or configuration; exits with status 1.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

#[derive(Debug, Parser)]
#[command(
    name = "stp",
    version,
    about = "Scene-text detection with channel-enhanced MSER and kernel SVMs"
)]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// TOML or JSON configuration file; flags override its values.
    #[arg(long, global = true, env = config::CONFIG_ENV)]
    pub config: Option<PathBuf>,
    /// Seed for every random stream (corpus, sampling, k-means, SMO).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Geometric filter preset: `urdu` or `permissive`.
    #[arg(long, global = true)]
    pub profile: Option<String>,
    /// Worker threads; defaults to the available parallelism.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// Print timings and progress to stderr.
    #[arg(short, long, global = true)]
    pub verbose: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic annotated corpus.
    Synth(SynthArgs),
    /// Crop labelled training patches from an annotated corpus.
    Crop(CropArgs),
    /// Train the candidate (patch) classifier.
    TrainPatch(TrainPatchArgs),
    /// Train the line verifier.
    TrainLine(TrainLineArgs),
    /// Train and test patch classifiers over a parameter grid.
    Sweep(SweepArgs),
    /// Detect text lines in images.
    Detect(DetectArgs),
    /// Score detections against ground truth.
    Eval(EvalArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Output directory (gets `images/` and `manifest.jsonl`).
    #[arg(long)]
    pub out: PathBuf,
    /// Number of images.
    #[arg(long)]
    pub count: Option<usize>,
    /// Canvas size as HxW.
    #[arg(long)]
    pub canvas: Option<Dims>,
    /// Directory of glyph PNGs to use instead of generated glyphs.
    #[arg(long)]
    pub glyph_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CropArgs {
    /// Corpus manifest (`manifest.jsonl`).
    #[arg(long)]
    pub manifest: PathBuf,
    /// `train` or `test`; all images when omitted.
    #[arg(long)]
    pub split: Option<Split>,
    /// Output directory (gets `text/`, `nontext/` and `labels.csv`).
    #[arg(long)]
    pub out: PathBuf,
    /// Patch size as HxW.
    #[arg(long)]
    pub dims: Option<Dims>,
    /// Random background crops per image.
    #[arg(long)]
    pub neg_per_image: Option<usize>,
    /// Cap on mined MSER candidates per image and class.
    #[arg(long)]
    pub mined_per_image: Option<usize>,
    /// Leave ground-truth rectangles out of the text class.
    #[arg(long)]
    pub no_gt: bool,
}

#[derive(Debug, Args)]
pub struct KernelArgs {
    /// `linear`, `rbf` or `poly`.
    #[arg(long)]
    pub kernel: Option<KernelKind>,
    /// Polynomial degree.
    #[arg(long)]
    pub degree: Option<u32>,
    /// Kernel scale; defaults to 1 / feature length.
    #[arg(long)]
    pub gamma: Option<f64>,
    /// Soft-margin penalty.
    #[arg(long = "C", alias = "c")]
    pub c: Option<f64>,
    /// Scale the text-class penalty by the class ratio.
    #[arg(long)]
    pub class_weighted: bool,
}

#[derive(Debug, Args)]
pub struct TrainPatchArgs {
    /// Patch directory written by `crop`.
    #[arg(long)]
    pub patches: PathBuf,
    /// Held-out patch directory to report accuracy on.
    #[arg(long)]
    pub test_patches: Option<PathBuf>,
    /// Model file to write.
    #[arg(long)]
    pub out: PathBuf,
    /// Descriptor: `hog` or `kmeans`.
    #[arg(long)]
    pub features: Option<String>,
    /// HOG cell size in pixels.
    #[arg(long)]
    pub cell_size: Option<usize>,
    /// Codebook size for `kmeans` features.
    #[arg(long)]
    pub k: Option<usize>,
    /// Canvas the descriptor is computed on, as HxW.
    #[arg(long)]
    pub dims: Option<Dims>,
    #[command(flatten)]
    pub kernel: KernelArgs,
}

#[derive(Debug, Args)]
pub struct TrainLineArgs {
    /// Corpus manifest (`manifest.jsonl`).
    #[arg(long)]
    pub manifest: PathBuf,
    /// Split to train on.
    #[arg(long, default_value = "train")]
    pub split: Split,
    /// Patch model used to find candidate lines; defaults to `[models] patch`.
    #[arg(long)]
    pub patch_model: Option<PathBuf>,
    /// Model file to write.
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub kernel: KernelArgs,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    /// Training patch directory.
    #[arg(long)]
    pub train: PathBuf,
    /// Test patch directory.
    #[arg(long)]
    pub test: PathBuf,
    /// `standard` for the built-in grid, or a TOML/JSON file with `[[cells]]`.
    #[arg(long, default_value = "standard")]
    pub grid: String,
    /// JSON results file; the text table goes next to it with `.txt`.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct DetectArgs {
    /// Images to process.
    #[arg(long, conflicts_with = "manifest")]
    pub image: Vec<PathBuf>,
    /// Process the images of a manifest instead.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Restrict a manifest to one split.
    #[arg(long, requires = "manifest")]
    pub split: Option<Split>,
    /// Defaults to `[models] patch` in the configuration.
    #[arg(long)]
    pub patch_model: Option<PathBuf>,
    /// Defaults to `[models] line` in the configuration.
    #[arg(long)]
    pub line_model: Option<PathBuf>,
    /// Detections file (JSON lines); stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Directory for PNGs with the detections drawn on.
    #[arg(long)]
    pub overlay: Option<PathBuf>,
    /// Also write the output of this stage (1 to 4) to `--dump`.
    #[arg(long, requires = "dump", value_parser = clap::value_parser!(u8).range(1..=4))]
    pub dump_stage: Option<u8>,
    /// Stage dump file (JSON lines).
    #[arg(long)]
    pub dump: Option<PathBuf>,
    /// Start at this stage (2 to 4) from the dump in `--stage-input`.
    #[arg(long, requires = "stage_input", value_parser = clap::value_parser!(u8).range(2..=4))]
    pub from_stage: Option<u8>,
    /// Stage dump written by an earlier `--dump` run.
    #[arg(long)]
    pub stage_input: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Detections written by `detect`.
    #[arg(long)]
    pub detections: PathBuf,
    /// Corpus manifest with the ground truth.
    #[arg(long)]
    pub manifest: PathBuf,
    /// Score only this split.
    #[arg(long)]
    pub split: Option<Split>,
    /// Average precision and recall per image instead of over totals.
    #[arg(long = "macro")]
    pub macro_avg: bool,
    /// Row label in the table.
    #[arg(long, default_value = "HOG")]
    pub label: String,
    /// JSON report file.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Exit status for an error: 1 usage or configuration, 3 broken internal
/// invariant, 2 anything else.
fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.downcast_ref::<UsageError>().is_some() {
            return 1;
        }
        if let Some(e) = cause.downcast_ref::<stp_core::Error>() {
            return match e {
                stp_core::Error::Config(_) => 1,
                stp_core::Error::Invariant(_) => 3,
                _ => 2,
            };
        }
    }
    2
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match std::panic::catch_unwind(|| commands::run(cli)) {
        Ok(Ok(())) => ExitCode::SUCCESS,
        Ok(Err(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
        Err(_) => ExitCode::from(3),
    }
}
