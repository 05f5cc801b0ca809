use rayon::prelude::*;
use serde::Serialize;

use super::link::Link;
use super::run::{run_with_classical_input, ModeSnr, RunMode};
use super::PipelineError;
use crate::model::{ModeId, Scenario, SweepSpec};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepPoint {
    /// Classical power at the DeMUX output of each classical channel's own
    /// mode.
    pub output_power_w: f64,
    pub classical_input_w: Vec<f64>,
    pub snr: Vec<ModeSnr>,
}

/// Launch powers that put `output_power_w` at the DeMUX output port of each
/// classical channel's own mode.
pub fn classical_input_for_output(
    scenario: &Scenario,
    output_power_w: f64,
) -> Result<Vec<f64>, PipelineError> {
    let link = Link::new(scenario, &[])?;
    scenario
        .channels
        .classical()
        .map(|ch| {
            let p = ch.mode.index();
            let t = link.transmittance(ch.wavelength_nm, p, p);
            if t > 0.0 {
                Ok(output_power_w / t)
            } else {
                Err(PipelineError::Invalid(format!(
                    "classical channel on {} has no transmission to its own output",
                    ch.mode.label()
                )))
            }
        })
        .collect()
}

/// SNR of the monitored quantum outputs versus classical output power. Every
/// point reuses the scenario seed, so Monte Carlo points share their random
/// streams apart from the classical leakage intensity.
pub fn snr_vs_power_sweep(
    scenario: &Scenario,
    output_powers_w: &[f64],
    monitor: &[ModeId],
    mode: RunMode,
) -> Result<Vec<SweepPoint>, PipelineError> {
    if let Some(p) = output_powers_w
        .iter()
        .find(|p| !(**p >= 0.0 && p.is_finite()))
    {
        return Err(PipelineError::Invalid(format!(
            "sweep powers must be nonnegative, got {p}"
        )));
    }
    if output_powers_w.windows(2).any(|w| w[1] <= w[0]) {
        return Err(PipelineError::Invalid(
            "sweep powers must be strictly increasing".into(),
        ));
    }
    let mut scenario = scenario.clone();
    if !monitor.is_empty() {
        scenario.sweep = Some(SweepSpec {
            output_powers_w: output_powers_w.to_vec(),
            monitor: monitor.to_vec(),
        });
    }
    let unit = classical_input_for_output(&scenario, 1.0)?;
    output_powers_w
        .par_iter()
        .map(|&p| {
            let input: Vec<f64> = unit.iter().map(|u| u * p).collect();
            let result = run_with_classical_input(&scenario, mode, &input)?;
            Ok(SweepPoint {
                output_power_w: p,
                classical_input_w: input,
                snr: result.snr,
            })
        })
        .collect()
}
