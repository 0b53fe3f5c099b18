//! `iltber`: in-line-test resistance statistics to bit-error-rate reports.

pub mod analysis;
pub mod commands;
pub mod error;
pub mod manifest;
pub mod wafermap;

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

pub use error::{CliError, CliResult, EXIT_INSUFFICIENT, EXIT_OK, EXIT_PARSE, EXIT_USAGE};

#[derive(Debug, Parser)]
#[command(name = "iltber", version, about = "RRAM in-line-test statistics and bit-error-rate analysis")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TableFormat {
    Json,
    Csv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MapFormat {
    Text,
    Csv,
    Svg,
}

#[derive(Debug, Args)]
pub struct ScreenArgs {
    /// Chips with any forming voltage above this are rejected.
    #[arg(long, default_value_t = iltber_core::data::DEFAULT_VFORM_MAX_VOLT)]
    pub vform_max: f64,
    /// Minimum cycles per state for a chip to be fitted.
    #[arg(long, default_value_t = analysis::DEFAULT_MIN_CYCLES)]
    pub min_cycles: usize,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Per-chip log-normal fits of HRS and LRS resistances.
    Fit {
        input: PathBuf,
        #[command(flatten)]
        screen: ScreenArgs,
        #[arg(long, value_enum, default_value_t = TableFormat::Json)]
        format: TableFormat,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// BER per chip at a reference margin, optional curves and percentile chips.
    Ber {
        input: PathBuf,
        #[command(flatten)]
        screen: ScreenArgs,
        /// Reference design margin for the histogram and ranking.
        #[arg(long, default_value_t = iltber_core::ber::DEFAULT_REFERENCE_MARGIN, allow_negative_numbers = true)]
        margin: f64,
        /// Logarithmic margin grid `min:max:points`.
        #[arg(long)]
        margins: Option<String>,
        /// Add the 25th, 50th and 75th percentile chip curves.
        #[arg(long)]
        percentiles: bool,
        /// Histogram bin width in decades of BER.
        #[arg(long, default_value_t = 1.0)]
        bin_width: f64,
        #[arg(long, value_enum, default_value_t = TableFormat::Json)]
        format: TableFormat,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Lot/wafer/chip variance components of a forming parameter.
    Varcomp {
        input: PathBuf,
        #[arg(long, default_value = "vform")]
        param: String,
        /// `device_size` or `none`.
        #[arg(long, default_value = "device_size")]
        group_by: String,
        /// Drop chips above this forming voltage first.
        #[arg(long)]
        vform_max: Option<f64>,
        #[arg(long, value_enum, default_value_t = TableFormat::Json)]
        format: TableFormat,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Wafer map of forming voltage or log10 BER.
    Wafermap {
        input: PathBuf,
        #[arg(long, default_value = "vform")]
        metric: String,
        #[arg(long, default_value_t = iltber_core::ber::DEFAULT_REFERENCE_MARGIN, allow_negative_numbers = true)]
        margin: f64,
        #[arg(long, value_enum, default_value_t = MapFormat::Text)]
        format: MapFormat,
        /// `LOT/WAFER`; defaults to the first wafer.
        #[arg(long)]
        wafer: Option<String>,
        /// Device size for the forming map; defaults to the cycled device size.
        #[arg(long)]
        device_size: Option<u32>,
        /// Draw y increasing downward.
        #[arg(long)]
        y_down: bool,
        #[command(flatten)]
        screen: ScreenArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Full pipeline into a bundle directory.
    Report {
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        screen: ScreenArgs,
        #[arg(long, default_value_t = iltber_core::ber::DEFAULT_REFERENCE_MARGIN, allow_negative_numbers = true)]
        margin: f64,
        #[arg(long, default_value = "0.1:10:50")]
        margins: String,
        #[arg(long, default_value_t = 1.0)]
        bin_width: f64,
        #[arg(long)]
        wafer: Option<String>,
        /// Manifest timestamp (Unix seconds or verbatim text); falls back to SOURCE_DATE_EPOCH.
        #[arg(long)]
        timestamp: Option<String>,
        /// Replace an existing bundle directory.
        #[arg(long)]
        force: bool,
    },
    /// Generate a synthetic fleet from a JSON config.
    Synth {
        config: PathBuf,
        /// Output file; `.jsonl` writes JSON lines, anything else CSV.
        #[arg(long)]
        out: PathBuf,
        /// Override the config seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        timestamp: Option<String>,
    },
    /// Independent checks: Monte Carlo tail counts or quadrature.
    Oracle(OracleArgs),
}

#[derive(Debug, Args)]
#[command(group(clap::ArgGroup::new("mode").required(true).args(["mc", "quad"])))]
pub struct OracleArgs {
    /// Monte Carlo BER estimate for the given fits and margin.
    #[arg(long)]
    pub mc: bool,
    /// Normal upper tail by adaptive quadrature at `--z`.
    #[arg(long)]
    pub quad: bool,
    #[arg(long, allow_negative_numbers = true)]
    pub z: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub mu_h: Option<f64>,
    #[arg(long)]
    pub sigma_h: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub mu_l: Option<f64>,
    #[arg(long)]
    pub sigma_l: Option<f64>,
    #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
    pub margin: f64,
    #[arg(long, default_value_t = 1_000_000)]
    pub samples: u64,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
}

/// Parses `args` (including the program name), runs, and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match commands::dispatch(cli.command) {
        Ok(out) => {
            if !out.is_empty() {
                let mut stdout = std::io::stdout().lock();
                if stdout.write_all(out.as_bytes()).and_then(|_| stdout.flush()).is_err() {
                    return EXIT_USAGE;
                }
            }
            EXIT_OK
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
