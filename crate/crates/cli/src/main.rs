use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use comet_core::engine::Policy;

mod commands;
mod config;
mod demo;

use config::Architecture;

/// Trace-driven simulator for optically addressed phase-change main memory.
#[derive(Debug, Parser)]
#[command(name = "comet", version)]
pub struct Cli {
    /// JSON run configuration; built-in defaults when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Write the JSON report here and the CSV next to it.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Seed for random traces and synthetic images.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true, value_enum)]
    arch: Option<Architecture>,
    #[arg(long, global = true, value_parser = parse_policy)]
    policy: Option<Policy>,
    /// Form printed on standard output.
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Text,
    Json,
    Csv,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run a trace and report its statistics.
    Simulate {
        #[arg(long)]
        trace: Option<PathBuf>,
        /// Also report power over time in bins of this width.
        #[arg(long)]
        timeline_bin_ns: Option<f64>,
    },
    /// Static power breakdown of the configured architecture.
    Power,
    /// Compare the 1, 2 and 4 bits-per-cell members of the geometry family.
    SweepB {
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Show where an address lands inside the array.
    Map {
        #[arg(long, conflicts_with = "addr")]
        row: Option<u64>,
        #[arg(long, conflicts_with = "addr")]
        col: Option<u64>,
        #[arg(long, default_value_t = 0)]
        bank: u32,
        #[arg(long, default_value_t = 0)]
        channel: u32,
        /// Flat byte address, hex with or without `0x`.
        #[arg(long, value_parser = parse_hex)]
        addr: Option<u64>,
    },
    /// Dump the interface gain lookup table.
    Lut {
        #[arg(long)]
        bits: Option<u8>,
    },
    /// Store an image in a crossbar and watch row writes corrupt it.
    CorruptDemo {
        /// Raw grayscale image: u32 LE width, u32 LE height, then pixel bytes.
        #[arg(long, conflicts_with = "synthetic")]
        image: Option<PathBuf>,
        /// Use a seeded noise image filling a 32 x 32 array.
        #[arg(long)]
        synthetic: bool,
        /// 16 levels at 6 % spacing instead of the 4-level crossbar set.
        #[arg(long)]
        as_published: bool,
        /// Optically isolated cells.
        #[arg(long)]
        isolated: bool,
        #[arg(long, default_value_t = 4)]
        steps: usize,
        /// Write the image read back after the last step.
        #[arg(long)]
        dump: Option<PathBuf>,
    },
    /// Write a synthetic trace.
    GenTrace {
        #[arg(long, value_enum)]
        pattern: Option<PatternArg>,
        #[arg(long)]
        requests: Option<u64>,
        #[arg(long)]
        read_fraction: Option<f64>,
        #[arg(long)]
        inter_arrival_ns: Option<f64>,
        #[arg(long)]
        footprint_bytes: Option<u64>,
        #[arg(long)]
        stride_lines: Option<u64>,
    },
    /// Print the default configuration document.
    Defaults,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PatternArg {
    Stream,
    Stride,
    Random,
}

fn parse_policy(s: &str) -> Result<Policy, String> {
    match s {
        "open" => Ok(Policy::Open),
        "closed" => Ok(Policy::Closed),
        _ => Err(format!("expected `open` or `closed`, got `{s}`")),
    }
}

fn parse_hex(s: &str) -> Result<u64, String> {
    let digits = s.strip_prefix("0x").or_else(|| s.strip_prefix("0X")).unwrap_or(s);
    u64::from_str_radix(digits, 16).map_err(|e| format!("`{s}` is not a hex address: {e}"))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
