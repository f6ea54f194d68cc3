//! `gazekit` command-line frontend. Each subcommand reads line-delimited
//! records, delegates to the library and writes its artifacts plus a replay
//! manifest into the output directory.

mod commands;
pub mod config;
pub mod replay;
pub mod report;

use std::ffi::OsString;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use gazekit::formats::FormatError;

pub use config::{RunConfig, Settings};

/// Exit status for malformed input records.
pub const EXIT_SCHEMA: u8 = 65;
/// Exit status when a check ran and found problems.
pub const EXIT_CHECK_FAILED: u8 = 3;

#[derive(Debug, Parser)]
#[command(
    name = "gazekit",
    version,
    about = "Caption pools, paired-edit corpora and detector scoring"
)]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Default, Args)]
pub struct GlobalArgs {
    /// JSON run configuration; flags override its fields.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// RNG seed [default: 42]
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Macro-pool JSON file [default: built-in pool]
    #[arg(long, global = true)]
    pub pool: Option<PathBuf>,
    /// Verdict parser, either `MODE` or `MODEL=MODE` (repeatable).
    /// Modes: strict, strict-lenient, first-keyword, three-class.
    #[arg(long = "parse-mode", global = true)]
    pub parse_mode: Vec<String>,
    /// Scoring view: auto, paired or fake-only.
    #[arg(long, global = true)]
    pub view: Option<String>,
    /// JSON file with a list of gate rules.
    #[arg(long, global = true)]
    pub gate: Option<PathBuf>,
    /// Output directory [default: .]
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Reported-value rounding: truncate or half-up.
    #[arg(long, global = true)]
    pub rounding: Option<String>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Assign balanced template captions.
    Compose(ComposeArgs),
    /// Keep mutual-gaze images and unpack their bbox pairs.
    Unpack(UnpackArgs),
    /// Group-split a pair manifest and write its datasheet.
    Split(SplitArgs),
    /// Emit soft eye-region masks for every pair.
    Mask(MaskArgs),
    /// Check that fakes differ from reals only inside their masks.
    VerifyPairs(VerifyArgs),
    /// Score prediction logs and describe the generated outputs.
    Eval(EvalArgs),
    /// Pick the balanced-accuracy checkpoint from an eval trace.
    Select(SelectArgs),
    /// Apply card gate rules to prediction logs.
    Gate(GateArgs),
}

#[derive(Debug, Args)]
pub struct ComposeArgs {
    /// Captions per label.
    #[arg(long, conflicts_with = "pairs", required_unless_present = "pairs")]
    pub n_per_label: Option<usize>,
    /// Caption the train split of this pair manifest instead.
    #[arg(long)]
    pub pairs: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct UnpackArgs {
    /// Gaze annotation records.
    pub annotations: PathBuf,
}

#[derive(Debug, Args)]
pub struct SplitArgs {
    /// Pair manifest written by `unpack`.
    pub pairs: PathBuf,
    /// Split ratios as `TRAIN:VAL:TEST` [default: 8:1:1]
    #[arg(long)]
    pub ratios: Option<String>,
    /// Datasheet title.
    #[arg(long, default_value = "gaze pairs")]
    pub name: String,
    /// Image path pattern for real samples in the benchmark manifests.
    #[arg(long, default_value = "real/{image_id}.jpg")]
    pub real_pattern: String,
    /// Image path pattern for fake samples in the benchmark manifests.
    #[arg(long, default_value = "fake/{base}.png")]
    pub fake_pattern: String,
}

#[derive(Debug, Args)]
pub struct MaskArgs {
    /// Pair manifest.
    pub pairs: PathBuf,
    /// Directory holding `<image_id>.{png,jpg,jpeg}`.
    #[arg(long)]
    pub images: PathBuf,
    #[arg(long, default_value_t = gazekit::geometry::DEFAULT_BLUR_RADIUS)]
    pub blur: f64,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    /// Records `{id, real, fake, bbox}`; image paths are relative to this file.
    pub checks: PathBuf,
    #[arg(long, default_value_t = gazekit::geometry::DEFAULT_DILATION)]
    pub dilation: u32,
    #[arg(long, default_value_t = gazekit::geometry::DEFAULT_TOLERANCE)]
    pub tolerance: u8,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Prediction logs.
    #[arg(required = true)]
    pub logs: Vec<PathBuf>,
    /// Benchmark manifests the logs must cover exactly.
    #[arg(long)]
    pub manifest: Vec<PathBuf>,
    /// Generation cap used for the truncation rate.
    #[arg(long, default_value_t = 64)]
    pub max_new_tokens: u32,
}

#[derive(Debug, Args)]
pub struct SelectArgs {
    /// Snapshot records or a trainer state JSON with `log_history`.
    pub trace: PathBuf,
}

#[derive(Debug, Args)]
pub struct GateArgs {
    #[arg(required = true)]
    pub logs: Vec<PathBuf>,
}

/// Parse arguments, run, and map errors to exit codes.
pub fn run<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(e.exit_code() as u8);
        }
    };
    let raw: Vec<String> = args.iter().skip(1).map(|a| a.to_string_lossy().into_owned()).collect();
    match commands::execute(cli, raw) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            let schema = e
                .chain()
                .any(|c| matches!(c.downcast_ref(), Some(FormatError::SchemaViolation { .. })));
            ExitCode::from(if schema { EXIT_SCHEMA } else { 1 })
        }
    }
}
