//! Random mode coupling as linear power flow along the fiber:
//!
//! ```text
//! dP_p/dz = -α_p P_p + Σ_q d_pq (P_q - P_p)
//! ```
//!
//! integrated with a fixed-step fourth-order Runge-Kutta scheme, plus the
//! steady-state distribution and calibration of the inter-group coupling
//! coefficients against measured group cross-talk.

mod calibrate;
mod coupling;
mod optimize;
mod propagate;
mod steady;

use thiserror::Error;

pub use calibrate::{
    calibrate_coupling, read_group_table_csv, write_group_table_csv, CalibrationMode,
    CalibrationOptions, CalibrationResult, GroupTable, Parameterization,
};
pub use coupling::{build_coupling_matrix, generator, CouplingMatrix};
pub use optimize::{fit_box_least_squares, FitOptions, FitOutcome};
pub use propagate::{
    auto_step, group_transfer_fractions, propagate_power, propagate_traced, PowerVector,
    PropagationResult, Propagator, StepSize,
};
pub use steady::steady_state_distribution;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PowerFlowError {
    #[error("step {step} m is too large for a stable integration (negative or divergent power at z = {z} m)")]
    Instability { step: f64, z: f64 },
    #[error("invalid propagation input: {0}")]
    InvalidInput(String),
    #[error(
        "coupling graph has {components} disconnected components; the steady state is not unique"
    )]
    NonUniqueSteadyState { components: usize },
    #[error("steady-state iteration did not converge")]
    SteadyStateNotConverged,
    #[error("calibration did not converge after {iterations} iterations (best rms residual {:.4} dB)", best.rms_residual_db)]
    CalibrationFailed {
        best: Box<CalibrationResult>,
        iterations: usize,
    },
    #[error("invalid coupling matrix: {0}")]
    InvalidCoupling(String),
}
