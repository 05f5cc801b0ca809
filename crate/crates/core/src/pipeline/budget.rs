use serde::Serialize;

use crate::units::{photon_energy, DomainError};

/// Shot-noise-limited pulse rate of a classical channel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BaudBudget {
    pub classical_power_w: f64,
    pub wavelength_nm: f64,
    pub photons_per_pulse: f64,
    pub photon_energy_j: f64,
    pub max_baud: f64,
}

/// `B = P_c / (N_p h c / λ)`.
pub fn max_baud_rate(
    power_w: f64,
    wavelength_nm: f64,
    photons_per_pulse: f64,
) -> Result<BaudBudget, DomainError> {
    for (name, value) in [
        ("classical power", power_w),
        ("wavelength", wavelength_nm),
        ("photons per pulse", photons_per_pulse),
    ] {
        if !(value > 0.0 && value.is_finite()) {
            return Err(DomainError::NonPositive { name, value });
        }
    }
    let e = photon_energy(wavelength_nm);
    Ok(BaudBudget {
        classical_power_w: power_w,
        wavelength_nm,
        photons_per_pulse,
        photon_energy_j: e,
        max_baud: power_w / (photons_per_pulse * e),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn twenty_nanowatts_at_1565() {
        let b = max_baud_rate(20e-9, 1565.0, 20.0).unwrap();
        // 20e-9 / (20 * 1.269294477e-19)
        assert!(
            (b.max_baud - 7.878_393e9).abs() / 7.878e9 < 1e-6,
            "{}",
            b.max_baud
        );
        assert!((b.max_baud - 7.8e9).abs() / 7.8e9 < 0.02);
    }

    #[test]
    fn non_positive_inputs_fail() {
        assert!(max_baud_rate(0.0, 1565.0, 20.0).is_err());
        assert!(max_baud_rate(1e-9, -1.0, 20.0).is_err());
        assert!(max_baud_rate(1e-9, 1565.0, 0.0).is_err());
    }

    #[test]
    fn linear_in_power_and_dimensionally_closed() {
        let a = max_baud_rate(1e-9, 1550.0, 20.0).unwrap();
        let b = max_baud_rate(2e-9, 1550.0, 20.0).unwrap();
        assert!((b.max_baud / a.max_baud - 2.0).abs() < 1e-15);
        let back = b.max_baud * b.photons_per_pulse * b.photon_energy_j;
        assert!((back - b.classical_power_w).abs() <= 4.0 * f64::EPSILON * b.classical_power_w);
    }
}
