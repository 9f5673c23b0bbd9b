use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use yoloflow::commands::{self, Common, SimulateArgs};
use yoloflow::error::Result;

#[derive(Parser)]
#[command(name = "yoloflow", version, about = "Map YOLO-style CNNs onto a streaming FPGA accelerator model")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonArgs {
    /// Network description (JSON).
    #[arg(long)]
    network: PathBuf,
    /// Platform description (TOML or JSON).
    #[arg(long)]
    platform: Option<PathBuf>,
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
    #[arg(long, default_value_t = 8)]
    w_bits: u32,
    #[arg(long, default_value_t = 16)]
    a_bits: u32,
    /// Seed for synthesized weights and calibration input.
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

impl From<CommonArgs> for Common {
    fn from(a: CommonArgs) -> Self {
        Common { network: a.network, platform: a.platform, out_dir: a.out_dir, w_bits: a.w_bits, a_bits: a.a_bits, seed: a.seed }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Parse, infer shapes and check structural rules.
    Validate {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Quantize weights and choose activation scales.
    Quantize {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Skip-buffer depths, analytic or measured by simulation.
    Depths {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        simulate: bool,
        /// Design point to simulate (all parallelism 1 if absent).
        #[arg(long)]
        design: Option<PathBuf>,
        #[arg(long, default_value_t = 1)]
        frames: usize,
    },
    /// Allocate DSPs and place skip buffers.
    Dse {
        #[command(flatten)]
        common: CommonArgs,
        /// Depth report (analytic depths if absent).
        #[arg(long)]
        depths: Option<PathBuf>,
    },
    /// Run the cycle-stepped pipeline simulation.
    Simulate {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        design: PathBuf,
        /// Input tensor (JSON or SATI); seeded random if absent.
        #[arg(long)]
        input: Option<PathBuf>,
        /// Skip-buffer depths to size channels with; unbounded if absent.
        #[arg(long)]
        depths: Option<PathBuf>,
        #[arg(long, default_value_t = 1)]
        frames: usize,
        /// Compare outputs against the quantized reference.
        #[arg(long)]
        check: bool,
        /// Write per-cycle channel occupancy changes.
        #[arg(long)]
        trace: bool,
    },
    /// Evaluate a design point with the analytic models.
    Report {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        design: PathBuf,
        #[arg(long)]
        depths: Option<PathBuf>,
    },
    /// validate, quantize, allocate DSPs, size and place buffers, report.
    Flow {
        #[command(flatten)]
        common: CommonArgs,
        /// Measure depths by simulation instead of the analytic estimate.
        #[arg(long)]
        simulate: bool,
        #[arg(long, default_value_t = 1)]
        frames: usize,
    },
    /// Move the k largest skip buffers off-chip for k = 0..top_k.
    Ablation {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long, default_value_t = 5)]
        top_k: usize,
        #[arg(long)]
        depths: Option<PathBuf>,
    },
}

fn run(cmd: Command) -> Result<()> {
    match cmd {
        Command::Validate { common } => commands::validate(&common.into()),
        Command::Quantize { common } => commands::quantize(&common.into()),
        Command::Depths { common, simulate, design, frames } => {
            commands::depths(&common.into(), simulate, design.as_deref(), frames)
        }
        Command::Dse { common, depths } => commands::dse(&common.into(), depths.as_deref()),
        Command::Simulate { common, design, input, depths, frames, check, trace } => {
            let args = SimulateArgs { design: &design, input: input.as_deref(), depths: depths.as_deref(), frames, check, trace };
            commands::simulate(&common.into(), &args)
        }
        Command::Report { common, design, depths } => commands::report(&common.into(), &design, depths.as_deref()),
        Command::Flow { common, simulate, frames } => commands::flow(&common.into(), simulate, frames).map(|_| ()),
        Command::Ablation { common, top_k, depths } => {
            commands::ablation(&common.into(), top_k, depths.as_deref()).map(|_| ())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() || e.kind() == ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand => e.exit(),
        Err(e) => {
            // First paragraph of clap's message, folded onto one line.
            let text = e.to_string();
            let first: Vec<&str> = text.lines().take_while(|l| !l.trim().is_empty()).map(str::trim).collect();
            eprintln!("error[args]: {}", first.join(" ").trim_start_matches("error: "));
            return ExitCode::from(2);
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.code() as u8)
        }
    }
}
