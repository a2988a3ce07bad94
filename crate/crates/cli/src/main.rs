use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

mod commands;
mod manifest;

#[derive(Parser, Debug)]
#[command(name = "bgpburst", version, about = "Burstiness-based BGP incident detection")]
pub struct Cli {
    /// Detector config file (key=value lines or a JSON object).
    #[arg(long, global = true, env = "BGPBURST_CONFIG")]
    pub config: Option<PathBuf>,

    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,

    /// Seed for simulate; spec i gets seed + i.
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Worker threads; 0 picks one per core.
    #[arg(long, global = true, default_value_t = 0)]
    pub threads: usize,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Decode MRT update dumps into canonical event lines.
    Ingest(IngestArgs),
    /// Joint burstiness/volume table and Monte Carlo significance.
    Analyze(AnalyzeArgs),
    /// Run the burstiness and volume detectors.
    Detect(DetectArgs),
    /// Score detector reports against incident windows.
    Evaluate(EvaluateArgs),
    /// Generate synthetic event streams from spec files.
    Simulate(SimulateArgs),
}

#[derive(Args, Debug)]
pub struct IngestArgs {
    /// MRT files, optionally gzip or bzip2 compressed.
    #[arg(required = true)]
    pub inputs: Vec<PathBuf>,
    /// Collector name attached to every event.
    #[arg(long, default_value = "unknown")]
    pub collector: String,
    /// Keep only announcements from these origins (withdrawals are dropped).
    #[arg(long)]
    pub asn: Vec<u32>,
    /// Output file name inside the output directory.
    #[arg(long, default_value = "events.jsonl")]
    pub output: String,
}

#[derive(Args, Debug)]
pub struct AnalyzeArgs {
    /// Canonical event files.
    #[arg(long, required = true, num_args = 1..)]
    pub events: Vec<PathBuf>,
    /// Window start, RFC 3339 UTC.
    #[arg(long)]
    pub start: String,
    /// Window end (exclusive), RFC 3339 UTC.
    #[arg(long)]
    pub end: String,
    /// Incident-free window `START/END`; repeatable.
    #[arg(long = "null-window")]
    pub null_windows: Vec<String>,
    /// File with one `START/END` null window per line.
    #[arg(long)]
    pub null_windows_file: Option<PathBuf>,
    /// Run the significance test for these origins.
    #[arg(long)]
    pub asn: Vec<u32>,
    /// Restrict to these collectors.
    #[arg(long)]
    pub collector: Vec<String>,
    /// Incident file used to vet null windows; the bundled list by default.
    #[arg(long)]
    pub incidents: Option<PathBuf>,
    #[arg(long, default_value_t = bgpburst::burstiness::DEFAULT_MIN_EVENTS)]
    pub min_events: usize,
    #[arg(long, default_value_t = bgpburst::burstiness::DEFAULT_NULL_SAMPLES)]
    pub samples: usize,
    #[arg(long, default_value_t = bgpburst::burstiness::DEFAULT_SIGNIFICANCE)]
    pub alpha: f64,
}

#[derive(Args, Debug)]
pub struct DetectArgs {
    /// Canonical event files.
    #[arg(long, required = true, num_args = 1..)]
    pub events: Vec<PathBuf>,
    /// burstiness, volume or both.
    #[arg(long, default_value = "both")]
    pub detector: String,
    #[arg(long)]
    pub asn: Vec<u32>,
    #[arg(long)]
    pub collector: Vec<String>,
    /// Intensity decay rate; accepts a fraction like 1/300.
    #[arg(long)]
    pub r: Option<String>,
    #[arg(long)]
    pub omega: Option<u32>,
    #[arg(long)]
    pub delta: Option<f64>,
    #[arg(long)]
    pub warmup: Option<usize>,
    #[arg(long)]
    pub variance_floor: Option<f64>,
}

#[derive(Args, Debug)]
pub struct EvaluateArgs {
    /// Report file written by `detect`.
    #[arg(long, required = true)]
    pub reports: PathBuf,
    /// Incident file; the bundled list by default.
    #[arg(long)]
    pub incidents: Option<PathBuf>,
    /// Evaluate only these incidents (by name).
    #[arg(long)]
    pub incident: Vec<String>,
    /// Study period start, RFC 3339 UTC.
    #[arg(long, requires = "end")]
    pub start: Option<String>,
    /// Study period end (exclusive), RFC 3339 UTC.
    #[arg(long, requires = "start")]
    pub end: Option<String>,
    /// Canonical event files whose span sets the study period when
    /// --start/--end are absent.
    #[arg(long, conflicts_with = "start")]
    pub events: Vec<PathBuf>,
    /// Bin length in seconds.
    #[arg(long, default_value_t = bgpburst::evaluation::DEFAULT_BIN_SECONDS)]
    pub bin_seconds: u64,
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    /// JSON simulation specs.
    #[arg(required = true)]
    pub specs: Vec<PathBuf>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
