//! Command-line grammar.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use modemux::counting::Matching;
use modemux::model::ModeLabel;
use modemux::pipeline::RunMode;
use modemux::powerflow::Parameterization;

/// Environment variable holding the default output directory.
pub const OUTPUT_DIR_ENV: &str = "MODEMUX_OUTPUT_DIR";

#[derive(Debug, Parser)]
#[command(
    name = "modemux",
    version,
    about = "Simulate quantum and classical channels sharing a few-mode fiber link",
    after_help = "Exit status: 0 on success, 1 on domain errors (invalid arguments or scenario, failed fit or failed check), 2 on I/O errors."
)]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct GlobalArgs {
    /// Seed for every random stream; overrides counting.seed of the scenario
    #[arg(long, global = true, value_name = "N")]
    pub seed: Option<u64>,
    /// Rate model: closed-form rates or time-tagged event streams
    #[arg(long, global = true, value_enum, default_value_t = ModeArg::Analytic)]
    pub mode: ModeArg,
    /// Maximum number of worker threads (default: one per core)
    #[arg(long, global = true, value_name = "N", value_parser = clap::value_parser!(u16).range(1..))]
    pub jobs: Option<u16>,
    /// Root of the output bundles, laid out as <DIR>/<scenario-hash>/<command>/
    #[arg(long, global = true, value_name = "DIR", env = OUTPUT_DIR_ENV, hide_env_values = true, default_value = "modemux-out")]
    pub output_dir: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Analytic,
    MonteCarlo,
}

impl From<ModeArg> for RunMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Analytic => RunMode::Analytic,
            ModeArg::MonteCarlo => RunMode::MonteCarlo,
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check a scenario file and list every violation
    Validate {
        /// Scenario JSON file
        scenario: PathBuf,
    },
    /// Run a scenario and write rates, FQP, SNR and per-stage tables
    Simulate {
        /// Scenario JSON file
        scenario: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Fit fiber coupling to group cross-talk or to a group FQP pattern
    Calibrate(CalibrateArgs),
    /// Sweep the classical output power and report SNR per monitored mode
    Sweep {
        /// Scenario JSON file
        scenario: PathBuf,
        /// Classical output powers in W, comma separated and increasing (default: the scenario's sweep section)
        #[arg(long, value_delimiter = ',', value_name = "W,..")]
        powers: Option<Vec<f64>>,
        /// Output modes to report, e.g. HG00,HG11 (default: the scenario's monitor list or its quantum channels)
        #[arg(long, value_delimiter = ',', value_name = "MODE,..")]
        monitor: Option<Vec<ModeLabel>>,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Shot-noise limited baud rate of a classical channel
    Budget(BudgetArgs),
    /// Run the loss, FQP and SNR reference scenarios and check them against measured reference values
    Reproduce {
        /// Directory holding loss.json, fqp.json and snr.json
        dir: PathBuf,
    },
}

/// Command-line replacements for scenario fields.
#[derive(Debug, Clone, Default, Args)]
pub struct Overrides {
    /// Fiber length in m (fiber.length_m)
    #[arg(long, value_name = "M")]
    pub length_m: Option<f64>,
    /// Monte Carlo repetitions (counting.repetitions)
    #[arg(long, value_name = "N")]
    pub repetitions: Option<u32>,
    /// Acquisition time per repetition in s (counting.acquisition_s)
    #[arg(long, value_name = "S")]
    pub acquisition_s: Option<f64>,
    /// Coincidence window in s (counting.window_s)
    #[arg(long, value_name = "S")]
    pub window_s: Option<f64>,
    /// Coincidence matching rule (counting.matching)
    #[arg(long, value_enum, value_name = "RULE")]
    pub matching: Option<MatchingArg>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MatchingArg {
    Greedy,
    AllPairs,
}

impl From<MatchingArg> for Matching {
    fn from(m: MatchingArg) -> Self {
        match m {
            MatchingArg::Greedy => Matching::Greedy,
            MatchingArg::AllPairs => Matching::AllPairs,
        }
    }
}

#[derive(Debug, Args)]
pub struct CalibrateArgs {
    /// Scenario JSON file whose fiber is calibrated
    pub scenario: PathBuf,
    /// Measured group cross-talk in dB: CSV with header in\out,1,2,.. and empty cells for unmeasured entries
    #[arg(
        long,
        value_name = "CSV",
        conflicts_with = "fqp_groups",
        required_unless_present = "fqp_groups"
    )]
    pub crosstalk: Option<PathBuf>,
    /// Which coupling coefficients are free in the cross-talk fit
    #[arg(long, value_enum, default_value_t = ParamArg::Adjacent, requires = "crosstalk")]
    pub parameterization: ParamArg,
    /// Treat the cross-talk table as measured through MUX, fiber and DeMUX
    #[arg(long, requires = "crosstalk")]
    pub composite: bool,
    /// Wavelength in nm of the device matrices used by --composite (default: first quantum channel)
    #[arg(long, value_name = "NM", requires = "composite")]
    pub wavelength_nm: Option<f64>,
    /// Target group FQP, one fraction per group, comma separated; fits neighbouring-group coupling and a per-group loss step
    #[arg(long, value_delimiter = ',', value_name = "F,..")]
    pub fqp_groups: Option<Vec<f64>>,
    /// After the FQP fit, find the smallest counting-filter extinction keeping the SNR threshold at this classical output power (W)
    #[arg(long, value_name = "W", requires = "fqp_groups")]
    pub extinction_power: Option<f64>,
    /// SNR threshold in dB for --extinction-power
    #[arg(
        long,
        value_name = "DB",
        default_value_t = 10.0,
        requires = "extinction_power"
    )]
    pub snr_threshold: f64,
    #[command(flatten)]
    pub overrides: Overrides,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ParamArg {
    /// One coefficient for every group pair
    Uniform,
    /// One coefficient per neighbouring pair
    Adjacent,
    /// One coefficient per group pair
    AllPairs,
}

impl From<ParamArg> for Parameterization {
    fn from(p: ParamArg) -> Self {
        match p {
            ParamArg::Uniform => Parameterization::Uniform,
            ParamArg::Adjacent => Parameterization::AdjacentOnly,
            ParamArg::AllPairs => Parameterization::AllPairs,
        }
    }
}

#[derive(Debug, Args)]
pub struct BudgetArgs {
    /// Classical power in W
    #[arg(long, value_name = "W")]
    pub power: f64,
    /// Wavelength in m
    #[arg(
        long,
        value_name = "M",
        required_unless_present = "wavelength_nm",
        conflicts_with = "wavelength_nm"
    )]
    pub wavelength: Option<f64>,
    /// Wavelength in nm
    #[arg(long, value_name = "NM")]
    pub wavelength_nm: Option<f64>,
    /// Photons per pulse needed by the receiver
    #[arg(long, value_name = "N")]
    pub photons: f64,
}
