//! End-to-end runs: source, MUX, fiber, DeMUX, WDM filter and detectors,
//! followed by the coincidence estimators. Also classical-power sweeps, the
//! shot-noise baud budget, anchor fitting and report bundles.

mod budget;
mod fit;
mod link;
mod report;
mod run;
mod sweep;

pub use budget::{max_baud_rate, BaudBudget};
pub use fit::{fit_extinction, fit_fqp_pattern, ExtinctionFit, PatternFit, PatternFitOptions};
pub use link::{back_to_back_il_db, Link, BACK_TO_BACK_LENGTH_M};
pub use report::{
    calibration_bundle, loss_characterization, reproduce_report, simulation_bundle, sweep_bundle,
    write_atomic, Bundle, Check, LossRow, Table, GROUP_FQP_ANCHORS, REPRODUCE_FILES, SNR_ANCHOR_DB,
    SNR_ANCHOR_POWER_W,
};
pub use run::{
    run_scenario, run_with_classical_input, ModeSnr, Provenance, RunMode, SimulationResult, Stage,
};
pub use sweep::{classical_input_for_output, snr_vs_power_sweep, SweepPoint};

use std::path::PathBuf;

use thiserror::Error;

use crate::counting::CountingError;
use crate::devices::DeviceError;
use crate::model::ModelError;
use crate::powerflow::PowerFlowError;
use crate::units::DomainError;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Device(#[from] DeviceError),
    #[error(transparent)]
    PowerFlow(#[from] PowerFlowError),
    #[error(transparent)]
    Counting(#[from] CountingError),
    #[error(transparent)]
    Domain(#[from] DomainError),
    #[error("stage {stage}: {message}")]
    Stage {
        stage: &'static str,
        message: String,
    },
    #[error("no MUX/DeMUX band covers {0} nm")]
    NoBand(f64),
    #[error("{0}")]
    Invalid(String),
    #[error("missing scenario files: {}", .0.iter().map(|p| p.display().to_string()).collect::<Vec<_>>().join(", "))]
    MissingScenarios(Vec<PathBuf>),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl PipelineError {
    pub fn is_io(&self) -> bool {
        matches!(self, Self::Io { .. })
    }
}
