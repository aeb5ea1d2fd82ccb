mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use vibpapr::Error;

/// PAPR statistics, companding and RF-chain experiments for vibration signals.
#[derive(Debug, Parser)]
#[command(name = "vibpapr", version)]
pub struct Cli {
    /// Seed for every randomized step of the command.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Output file (bundle stem, CSV or JSON) or directory, depending on the command.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic signal bundle.
    Gen(GenArgs),
    /// Moving-average smoothing of every signal in a bundle.
    Smooth(SmoothArgs),
    /// Empirical PAPR CCDF of a bundle.
    Papr(PaprArgs),
    /// Theoretical Gaussian PAPR CCDF.
    Ccdf(CcdfArgs),
    /// μ-law compression or expansion, or a trained model's forward pass.
    Compand(CompandArgs),
    /// Train the source (smoothing + compressing) autoencoder.
    TrainSource(TrainSourceArgs),
    /// Train the destination (expanding + denoising) autoencoder.
    TrainDest(TrainDestArgs),
    /// Run a config-driven experiment, or pass a bundle through the RF chain.
    Chain(ChainArgs),
    /// Constellation EVM of a processed bundle against a reference bundle.
    Evm(EvmArgs),
    /// Welch PSD of a bundle (mean over signals or one signal).
    Psd(PsdArgs),
    /// Denoising SNR of a processed bundle against a reference bundle.
    Snrd(SnrdArgs),
    /// Summarize an experiment report as CSV.
    Report(ReportArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum GenKind {
    Gaussian,
    Bandlimited,
}

#[derive(Debug, Args)]
pub struct GenArgs {
    #[arg(long, conflicts_with = "bandlimited")]
    pub gaussian: bool,
    #[arg(long)]
    pub bandlimited: bool,
    #[arg(long)]
    pub n_signals: usize,
    #[arg(long)]
    pub len: usize,
    #[arg(long)]
    pub sigma: Option<f64>,
    /// Band-limited cut-off as a fraction of the sample rate.
    #[arg(long, default_value_t = 0.08)]
    pub cutoff: f64,
    #[arg(long, default_value_t = 0.05)]
    pub noise_ratio: f64,
}

#[derive(Debug, Args)]
pub struct SmoothArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, default_value_t = 5)]
    pub window: usize,
}

#[derive(Debug, Args)]
pub struct GridArgs {
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub from_db: f64,
    #[arg(long, default_value_t = 14.0, allow_negative_numbers = true)]
    pub to_db: f64,
    #[arg(long, default_value_t = 0.1)]
    pub step: f64,
}

#[derive(Debug, Args)]
pub struct PaprArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[command(flatten)]
    pub grid: GridArgs,
    /// Also write per-signal PAPR values (dB) to this CSV.
    #[arg(long)]
    pub per_signal: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CcdfArgs {
    #[arg(long, conflicts_with = "closed_form")]
    pub exact: bool,
    #[arg(long)]
    pub closed_form: bool,
    /// Samples per signal.
    #[arg(long)]
    pub n: usize,
    #[command(flatten)]
    pub grid: GridArgs,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum CompandMode {
    Compress,
    Expand,
}

#[derive(Debug, Args)]
pub struct CompandArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, value_enum, default_value_t = CompandMode::Compress)]
    pub mode: CompandMode,
    #[arg(long, default_value_t = 255.0)]
    pub mu: f64,
    /// Normalization constant A; compression defaults to each signal's peak.
    #[arg(long)]
    pub norm_a: Option<f64>,
    /// Run this trained model instead of μ-law.
    #[arg(long, conflicts_with_all = ["norm_a"])]
    pub model: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub batch: Option<usize>,
    #[arg(long, value_enum)]
    pub loss: Option<LossArg>,
    /// Continue training this model file (optimizer state included).
    #[arg(long)]
    pub resume: Option<PathBuf>,
    /// JSON file with architecture overrides.
    #[arg(long)]
    pub arch: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum LossArg {
    Mse,
    Mae,
}

#[derive(Debug, Args)]
pub struct TrainSourceArgs {
    /// Raw training signals.
    #[arg(long)]
    pub input: PathBuf,
    /// Smoothing window used to build the targets.
    #[arg(long, default_value_t = 5)]
    pub window: usize,
    /// Keep training past the compression-loss floor.
    #[arg(long)]
    pub no_floor_stop: bool,
    #[command(flatten)]
    pub train: TrainArgs,
}

#[derive(Debug, Args)]
pub struct TrainDestArgs {
    /// Compressed (possibly amplified and noisy) inputs.
    #[arg(long)]
    pub input: PathBuf,
    /// Original signals to reconstruct.
    #[arg(long)]
    pub target: PathBuf,
    #[command(flatten)]
    pub train: TrainArgs,
}

#[derive(Debug, Args)]
pub struct ChainArgs {
    /// Experiment config; all other flags are ignored when given.
    #[arg(long, conflicts_with = "input")]
    pub config: Option<PathBuf>,
    #[arg(long, required_unless_present = "config")]
    pub input: Option<PathBuf>,
    #[arg(long, default_value_t = 0.0)]
    pub ibo_db: f64,
    /// Enable the Rapp amplifier at this saturation level.
    #[arg(long)]
    pub a_sat: Option<f64>,
    /// Enable the amplifier with A_sat set to the mean signal power of this bundle.
    #[arg(long, conflicts_with = "a_sat")]
    pub a_sat_from: Option<PathBuf>,
    #[arg(long, default_value_t = 2.0)]
    pub p: f64,
    #[arg(long, default_value_t = 1.0)]
    pub gain: f64,
    /// Add white Gaussian noise at this SNR after the amplifier.
    #[arg(long, allow_negative_numbers = true)]
    pub snr_db: Option<f64>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum StatArg {
    Rms,
    Mean,
}

#[derive(Debug, Args)]
pub struct EvmArgs {
    #[arg(long)]
    pub reference: PathBuf,
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, value_enum, default_value_t = StatArg::Rms)]
    pub statistic: StatArg,
}

#[derive(Debug, Args)]
pub struct PsdArgs {
    #[arg(long)]
    pub input: PathBuf,
    /// Only this signal instead of the mean over the set.
    #[arg(long)]
    pub signal: Option<usize>,
    #[arg(long)]
    pub window_len: Option<usize>,
    #[arg(long, default_value_t = 0.5)]
    pub overlap: f64,
    #[arg(long)]
    pub nfft: Option<usize>,
}

#[derive(Debug, Args)]
pub struct SnrdArgs {
    #[arg(long)]
    pub reference: PathBuf,
    #[arg(long)]
    pub input: PathBuf,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// A report.json written by `chain --config`.
    #[arg(long)]
    pub input: PathBuf,
}

pub const EXIT_USAGE: u8 = 2;
pub const EXIT_DATA: u8 = 3;
pub const EXIT_TRAINING: u8 = 4;

pub fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Parameter { .. } => EXIT_USAGE,
        Error::Training(_) => EXIT_TRAINING,
        Error::Degenerate(_) | Error::Range { .. } | Error::Format { .. } | Error::Io { .. } => EXIT_DATA,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_USAGE } else { 0 });
        }
    };
    match commands::run(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
