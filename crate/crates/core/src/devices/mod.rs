//! Linear power-transfer models of the MUX/DeMUX, the WDM filters and the
//! single-photon detectors.

mod detector;
mod transfer;

use thiserror::Error;

pub use detector::{detect, DetectorResponse};
pub use transfer::{apply_transfer, apply_wdm_filter, mux_from_measurements, TransferMatrix};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DeviceError {
    #[error(
        "infeasible device: cross-talk leakage {leakage:.6e} from input p={input} reaches its total transmittance {total:.6e}"
    )]
    InfeasibleDevice {
        input: usize,
        leakage: f64,
        total: f64,
    },
    #[error("dimension mismatch: expected {expected} entries, got {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("input powers must be nonnegative")]
    NegativeInput,
}
