use nalgebra::DMatrix;

use super::PipelineError;
use crate::devices::{mux_from_measurements, TransferMatrix};
use crate::model::{DeviceBands, ModeSet, Scenario};
use crate::powerflow::{build_coupling_matrix, Propagator, StepSize};

/// Fiber length of the back-to-back reference used to normalize FQP.
pub const BACK_TO_BACK_LENGTH_M: f64 = 40.0;

/// Device and fiber transfer matrices at one wavelength.
#[derive(Debug, Clone)]
pub struct Band {
    pub wavelength_nm: f64,
    pub mux: DMatrix<f64>,
    pub fiber: DMatrix<f64>,
    pub demux: DMatrix<f64>,
    /// `demux * fiber * mux`, indexed `(out, in)`.
    pub composite: DMatrix<f64>,
}

/// Transfer matrices of a scenario's link at every wavelength it uses.
#[derive(Debug, Clone)]
pub struct Link {
    pub modes: ModeSet,
    bands: Vec<Band>,
}

fn device_matrix(
    bands: &DeviceBands,
    modes: ModeSet,
    wavelength_nm: f64,
) -> Result<TransferMatrix, PipelineError> {
    let spec = bands
        .for_wavelength(wavelength_nm)
        .ok_or(PipelineError::NoBand(wavelength_nm))?;
    Ok(mux_from_measurements(spec, modes)?)
}

impl Link {
    /// Builds the link for every channel wavelength plus `extra` ones.
    pub fn new(scenario: &Scenario, extra_wavelengths_nm: &[f64]) -> Result<Self, PipelineError> {
        Self::with_fiber_length(scenario, scenario.fiber.length_m, extra_wavelengths_nm)
    }

    fn with_fiber_length(
        scenario: &Scenario,
        length: f64,
        extra: &[f64],
    ) -> Result<Self, PipelineError> {
        let modes = scenario.modes();
        let fiber = &scenario.fiber;
        let propagator = Propagator::new(
            &build_coupling_matrix(fiber),
            &fiber.attenuation,
            length,
            StepSize::Auto,
        )?;
        let mut wavelengths: Vec<f64> = scenario
            .channels
            .channels
            .iter()
            .map(|c| c.wavelength_nm)
            .collect();
        wavelengths.extend_from_slice(extra);
        wavelengths.sort_by(f64::total_cmp);
        wavelengths.dedup();
        let bands = wavelengths
            .into_iter()
            .map(|w| {
                let mux = device_matrix(&scenario.mux, modes, w)?.t;
                let demux = device_matrix(&scenario.demux, modes, w)?.t;
                let composite = &demux * propagator.matrix() * &mux;
                Ok(Band {
                    wavelength_nm: w,
                    mux,
                    fiber: propagator.matrix().clone(),
                    demux,
                    composite,
                })
            })
            .collect::<Result<Vec<_>, PipelineError>>()?;
        Ok(Self { modes, bands })
    }

    pub fn band(&self, wavelength_nm: f64) -> &Band {
        self.bands
            .iter()
            .find(|b| b.wavelength_nm == wavelength_nm)
            .expect("link built for every channel wavelength")
    }

    /// Composite transmittance from input mode `input` to output `output`.
    pub fn transmittance(&self, wavelength_nm: f64, input: usize, output: usize) -> f64 {
        self.band(wavelength_nm).composite[(output, input)]
    }
}

/// Per-mode insertion loss (signed dB, total output over input) of the
/// devices with a short fiber between them, at `wavelength_nm`.
pub fn back_to_back_il_db(
    scenario: &Scenario,
    wavelength_nm: f64,
) -> Result<Vec<f64>, PipelineError> {
    let length = scenario.fiber.length_m.min(BACK_TO_BACK_LENGTH_M);
    let link = Link::with_fiber_length(scenario, length, &[wavelength_nm])?;
    let band = link.band(wavelength_nm);
    band.composite
        .column_iter()
        .map(|c| Ok(crate::units::linear_to_db(c.sum())?))
        .collect()
}
