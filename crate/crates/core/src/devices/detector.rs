use crate::model::DetectorSpec;

/// Click rate of a detector and where the clicks come from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectorResponse {
    pub click_rate: f64,
    pub signal: f64,
    pub dark: f64,
    pub leakage: f64,
}

/// Linear thinning of the incident photon rates plus the dark rate. Dead time
/// and afterpulsing are not modeled.
pub fn detect(detector: &DetectorSpec, incident_rate: f64, leakage_rate: f64) -> DetectorResponse {
    let signal = detector.efficiency * incident_rate;
    let leakage = detector.efficiency * leakage_rate;
    let dark = detector.dark_rate_hz;
    DetectorResponse {
        click_rate: signal + dark + leakage,
        signal,
        dark,
        leakage,
    }
}
