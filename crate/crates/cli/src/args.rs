use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(
    name = "neurodeploy",
    version,
    about = "Quantize, lower, place and simulate spiking networks for a many-core neuromorphic chip"
)]
pub struct Cli {
    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,

    /// Worker threads for parallel stages (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Preprocess a DVS recording into binned event frames.
    Convert(ConvertArgs),
    /// Quantize a graph to 8-bit weights with threshold co-scaling.
    Quantize(QuantizeArgs),
    /// Lower a graph into populations and synapse-list projections.
    Lower(LowerArgs),
    /// Place population slices onto processing elements.
    Partition(PartitionArgs),
    /// Run a lowered network on an input recording.
    Simulate(SimulateArgs),
    /// Sweep the quantization percentile and write metric per percentile.
    Evaluate(EvaluateArgs),
    /// Summarize model size, placement, energy and sweep results.
    Report(ReportArgs),
}

#[derive(Debug, Clone, Args)]
pub struct PreprocessArgs {
    /// Time bin width in milliseconds.
    #[arg(long, default_value_t = 1)]
    pub bin_ms: u32,
    /// Spatial downsampling factor.
    #[arg(long, default_value_t = 4)]
    pub downsample: u32,
    /// Sensor size as WIDTHxHEIGHT.
    #[arg(long, default_value = "128x128", value_parser = parse_sensor)]
    pub sensor: (u32, u32),
    /// Skip the background-activity filter.
    #[arg(long)]
    pub no_denoise: bool,
    /// Neighbourhood radius of the denoise filter in pixels.
    #[arg(long, default_value_t = 1)]
    pub denoise_px: u32,
    /// Time window of the denoise filter in microseconds.
    #[arg(long, default_value_t = 1_000_000)]
    pub denoise_window_us: u64,
}

fn parse_sensor(s: &str) -> Result<(u32, u32), String> {
    let (w, h) = s
        .split_once(['x', 'X'])
        .ok_or_else(|| format!("expected WIDTHxHEIGHT, got '{s}'"))?;
    let dim = |v: &str| {
        v.trim()
            .parse::<u32>()
            .ok()
            .filter(|&d| d > 0)
            .ok_or_else(|| format!("invalid sensor dimension '{v}'"))
    };
    Ok((dim(w)?, dim(h)?))
}

#[derive(Debug, Args)]
pub struct ConvertArgs {
    /// Event recording (`.csv` with t_us,x,y,p rows, or packed `.bin`).
    pub events: PathBuf,
    /// Output frame tensor; conventionally `*.frames.bin`.
    #[arg(short, long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub pre: PreprocessArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    /// Post-training quantization of a full-precision graph.
    Ptq,
    /// Finalize a quantization-aware-trained graph.
    Qat,
}

#[derive(Debug, Args)]
pub struct QuantizeArgs {
    /// Input `.snngraph.json`.
    pub graph: PathBuf,
    #[arg(long, value_enum)]
    pub mode: Mode,
    /// Weight-magnitude percentile mapped to 127 (ptq only; default 100).
    #[arg(long)]
    pub percentile: Option<f64>,
    /// Output `.snngraph.json`.
    #[arg(short, long)]
    pub out: PathBuf,
    /// Write tensors into this sidecar file instead of inline JSON.
    #[arg(long)]
    pub sidecar: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Weights {
    /// Integer weights for quantized graphs, real weights otherwise.
    Auto,
    Real,
    Integer,
}

#[derive(Debug, Args)]
pub struct LowerArgs {
    /// Input `.snngraph.json`.
    pub graph: PathBuf,
    /// Output network JSON; the synapse table is written next to it.
    #[arg(short, long)]
    pub out: PathBuf,
    /// Synapse table path (default: `<out stem>.synapses.bin`).
    #[arg(long)]
    pub table: Option<PathBuf>,
    #[arg(long, default_value_t = 600)]
    pub max_timesteps: usize,
    #[arg(long, value_enum, default_value_t = Weights::Auto)]
    pub weights: Weights,
}

#[derive(Debug, Args)]
pub struct PartitionArgs {
    /// Lowered network JSON.
    pub network: PathBuf,
    /// Output placement JSON.
    #[arg(short, long)]
    pub out: PathBuf,
    /// JSON object of per-population neuron limits, e.g. `{"1": 900}`.
    #[arg(long)]
    pub overrides: Option<PathBuf>,
    /// Processing elements available on the chip.
    #[arg(long, default_value_t = 152)]
    pub chip_pes: usize,
    /// Also write the per-PE memory ledger as CSV.
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum EngineArg {
    /// Per-PE slices, FIFO routing, float32 membrane state.
    Placed,
    /// Dense float64 matrices without placement.
    Reference,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Lowered network JSON.
    pub network: PathBuf,
    /// Input recording: `*.frames.bin` from `convert`, or raw events.
    #[arg(short, long)]
    pub input: PathBuf,
    /// Placement JSON (placed engine; partitioned with defaults if omitted).
    #[arg(long)]
    pub placement: Option<PathBuf>,
    /// Output directory for spikes.csv, summary.json and timing.json.
    #[arg(long)]
    pub out_dir: PathBuf,
    #[arg(long, default_value_t = 600)]
    pub max_timesteps: usize,
    #[arg(long, value_enum, default_value_t = EngineArg::Placed)]
    pub engine: EngineArg,
    /// Populations to record: `all`, `none` or a comma-separated list
    /// (default: input and output populations).
    #[arg(long)]
    pub record: Option<String>,
    /// Energy per 1 ms frame in millijoules.
    #[arg(long, default_value_t = 0.765)]
    pub mj_per_frame: f64,
    #[command(flatten)]
    pub pre: PreprocessArgs,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Full-precision `.snngraph.json`.
    pub graph: PathBuf,
    /// Input recordings; repeat for several samples.
    #[arg(short, long, required = true)]
    pub input: Vec<PathBuf>,
    /// Class label per input, in order; enables the accuracy metric.
    #[arg(long)]
    pub label: Vec<usize>,
    /// Comma-separated percentiles.
    #[arg(long, value_delimiter = ',', default_value = "90,95,99,99.5,99.9,100")]
    pub percentiles: Vec<f64>,
    /// Output CSV with `percentile,metric` rows.
    #[arg(short, long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 600)]
    pub max_timesteps: usize,
    #[arg(long, value_enum, default_value_t = EngineArg::Placed)]
    pub engine: EngineArg,
    /// Per-population neuron limits used when placing each sweep point.
    #[arg(long)]
    pub overrides: Option<PathBuf>,
    #[command(flatten)]
    pub pre: PreprocessArgs,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Full-precision `.snngraph.json`.
    #[arg(long)]
    pub graph: PathBuf,
    /// Quantized `.snngraph.json`.
    #[arg(long)]
    pub quantized: Option<PathBuf>,
    /// Placement JSON.
    #[arg(long)]
    pub placement: Option<PathBuf>,
    /// `summary.json` from `simulate`.
    #[arg(long)]
    pub summary: Option<PathBuf>,
    /// Sweep CSV from `evaluate`.
    #[arg(long)]
    pub sweep: Option<PathBuf>,
    /// Output report JSON.
    #[arg(short, long)]
    pub out: PathBuf,
}
