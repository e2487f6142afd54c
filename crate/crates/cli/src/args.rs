use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use tcpspread::sim::{LossReaction, ScenarioKind};
use tcpspread::Flavor;

/// Environment variable that overrides the default output directory.
pub const OUT_DIR_ENV: &str = "TCPSPREAD_OUT";

#[derive(Debug, Parser)]
#[command(
    name = "tcpspread",
    version,
    about = "TCP flow-rate spread: Markov model, simulator and analysis"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve the window Markov chain for a loss probability.
    Solve(SolveArgs),
    /// Run a simulation scenario and store its trace.
    Simulate(SimulateArgs),
    /// Compute statistics of a stored trace.
    Analyze(AnalyzeArgs),
    /// Regenerate the data behind a figure or table.
    Reproduce(ReproduceArgs),
    /// Run the acceptance checks.
    Verify(VerifyArgs),
}

#[derive(Debug, Clone, Args)]
pub struct OutDir {
    /// Directory for output files.
    #[arg(long, env = OUT_DIR_ENV, default_value = "out")]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    /// Per-packet loss probability.
    #[arg(long)]
    pub p_loss: f64,
    /// Segments per ACK.
    #[arg(long, default_value_t = 2.0)]
    pub a: f64,
    /// Round trip time in seconds.
    #[arg(long, default_value_t = 0.1)]
    pub rtt: f64,
    /// Segment size in bytes.
    #[arg(long, default_value_t = 1514.0)]
    pub mss: f64,
    /// Largest window state; chosen automatically when omitted.
    #[arg(long)]
    pub cwnd_max: Option<usize>,
    /// Log-normal shape parameter for the comparison.
    #[arg(long, default_value_t = tcpspread::chain::LOGNORMAL_SIGMA)]
    pub sigma: f64,
    #[command(flatten)]
    pub out: OutDir,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Scenario file (`key = value` lines with `[flow]` sections). Other
    /// scenario flags are ignored when given.
    #[arg(long, conflicts_with_all = ["scenario"])]
    pub config: Option<PathBuf>,
    #[arg(long, value_parser = parse_scenario, required_unless_present = "config")]
    pub scenario: Option<ScenarioKind>,
    /// Flavor of every long-lived flow when `--flows` is not given.
    #[arg(long, value_parser = parse_flavor, default_value = "reno")]
    pub flavor: Flavor,
    /// Flow mix such as `2xreno`, `reno,cubic` or `9xcubic`.
    #[arg(long)]
    pub flows: Option<String>,
    /// Bottleneck capacity in bit/s.
    #[arg(long)]
    pub capacity: Option<f64>,
    /// Base round trip time in seconds.
    #[arg(long, default_value_t = 0.1)]
    pub rtt: f64,
    /// Bottleneck buffer in bytes; one bandwidth-delay product when omitted.
    #[arg(long)]
    pub buffer: Option<u64>,
    /// Drop probability for the random-drop scenario.
    #[arg(long)]
    pub p_loss: Option<f64>,
    /// Simulated seconds.
    #[arg(long, default_value_t = 7500.0)]
    pub duration: f64,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    #[arg(long, value_parser = parse_reaction)]
    pub mode: Option<LossReaction>,
    /// Base trace interval in seconds.
    #[arg(long, default_value_t = 1.0)]
    pub interval: f64,
    /// Seconds excluded from statistics.
    #[arg(long)]
    pub warmup: Option<f64>,
    #[arg(long, default_value_t = 1514.0)]
    pub mss: f64,
    #[arg(long, default_value_t = 2.0)]
    pub a: f64,
    /// Finite-flow size in bytes.
    #[arg(long, default_value_t = 12_000_000)]
    pub volume: u64,
    /// Finite-flow repetitions; runs until `--duration` when omitted.
    #[arg(long)]
    pub repetitions: Option<u32>,
    /// Flavor of the finite flow.
    #[arg(long, value_parser = parse_flavor, default_value = "cubic")]
    pub finite_flavor: Flavor,
    #[command(flatten)]
    pub out: OutDir,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    /// Trace CSV written by `simulate`.
    pub trace: PathBuf,
    /// Aggregation intervals in seconds.
    #[arg(long, value_delimiter = ',', default_values_t = tcpspread::stats::DEFAULT_INTERVALS_S)]
    pub intervals: Vec<f64>,
    /// Histogram bin width in bit/s.
    #[arg(long, default_value_t = 0.5e6)]
    pub bin_width: f64,
    /// Quantiles in percent.
    #[arg(long, value_delimiter = ',', default_values_t = [5.0, 50.0, 95.0])]
    pub quantiles: Vec<f64>,
    /// Keep the warm-up intervals.
    #[arg(long)]
    pub keep_warmup: bool,
    #[command(flatten)]
    pub out: OutDir,
}

#[derive(Debug, Args)]
pub struct ReproduceArgs {
    /// One of fig2..fig8, table1, table2, or `all`.
    pub target: String,
    /// Full-length runs (12 h, 2500 repetitions) instead of the short defaults.
    #[arg(long)]
    pub full: bool,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    #[command(flatten)]
    pub out: OutDir,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    /// Only the checks that finish within a minute.
    #[arg(long)]
    pub quick: bool,
    /// Run only these check numbers.
    #[arg(long, value_delimiter = ',')]
    pub only: Vec<u8>,
    /// Log-normal shape for the log-normal check.
    #[arg(long, default_value_t = tcpspread::chain::LOGNORMAL_SIGMA)]
    pub sigma: f64,
}

fn parse_scenario(s: &str) -> Result<ScenarioKind, String> {
    s.parse().map_err(|e: tcpspread::Error| e.to_string())
}

fn parse_reaction(s: &str) -> Result<LossReaction, String> {
    s.parse().map_err(|e: tcpspread::Error| e.to_string())
}

fn parse_flavor(s: &str) -> Result<Flavor, String> {
    s.parse().map_err(|e: tcpspread::Error| e.to_string())
}

/// Parses `2xreno,cubic` style flow mixes.
pub fn parse_flows(s: &str) -> Result<Vec<Flavor>, String> {
    let mut out = Vec::new();
    for part in s.split([',', '+']).map(str::trim).filter(|p| !p.is_empty()) {
        let (count, name) = match part.split_once(['x', '*']) {
            Some((n, name)) if n.chars().all(|c| c.is_ascii_digit()) && !n.is_empty() => {
                (n.parse::<usize>().map_err(|e| e.to_string())?, name)
            }
            _ => (1, part),
        };
        let flavor = parse_flavor(name)?;
        out.extend(std::iter::repeat_n(flavor, count));
    }
    if out.is_empty() {
        return Err(format!("no flows in `{s}`"));
    }
    Ok(out)
}
