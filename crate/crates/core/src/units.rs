//! Unit conversions and physical constants.

use thiserror::Error;

/// Planck constant, J·s (exact SI value).
pub const PLANCK: f64 = 6.626_070_15e-34;
/// Speed of light in vacuum, m/s (exact SI value).
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DomainError {
    #[error("linear ratio must be positive to convert to dB, got {0}")]
    NonPositiveRatio(f64),
    #[error("{name} must be positive, got {value}")]
    NonPositive { name: &'static str, value: f64 },
}

/// `10^(x/10)`.
pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn linear_to_db(ratio: f64) -> Result<f64, DomainError> {
    if ratio > 0.0 && !ratio.is_nan() {
        Ok(10.0 * ratio.log10())
    } else {
        Err(DomainError::NonPositiveRatio(ratio))
    }
}

/// Like [`linear_to_db`] but maps zero to `-inf` instead of failing.
pub fn linear_to_db_lossy(ratio: f64) -> f64 {
    if ratio > 0.0 {
        10.0 * ratio.log10()
    } else {
        f64::NEG_INFINITY
    }
}

/// Photon energy `h c / λ` in joules for a vacuum wavelength in nm.
pub fn photon_energy(wavelength_nm: f64) -> f64 {
    PLANCK * SPEED_OF_LIGHT / (wavelength_nm * 1e-9)
}

/// Converts a power attenuation figure in dB/km to a coefficient in 1/m.
pub fn db_per_km_to_per_m(db_per_km: f64) -> f64 {
    db_per_km * std::f64::consts::LN_10 / 10.0 / 1000.0
}

pub fn per_m_to_db_per_km(alpha: f64) -> f64 {
    alpha * 1000.0 * 10.0 / std::f64::consts::LN_10
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn known_values() {
        assert_eq!(db_to_linear(0.0), 1.0);
        assert!((db_to_linear(-10.0) - 0.1).abs() < 1e-15);
        // 10^(-1.81) = 0.01548816618912481...
        assert!((db_to_linear(-18.1) - 0.015_488_166_189_124_8).abs() < 1e-15);
        assert!((db_to_linear(-18.1) - 0.015488).abs() < 5e-7);
    }

    #[test]
    fn non_positive_ratio_is_domain_error() {
        assert_eq!(linear_to_db(0.0), Err(DomainError::NonPositiveRatio(0.0)));
        assert!(linear_to_db(-1.0).is_err());
        assert!(linear_to_db(f64::NAN).is_err());
        assert_eq!(linear_to_db_lossy(0.0), f64::NEG_INFINITY);
    }

    #[test]
    fn attenuation_conversion() {
        let a = db_per_km_to_per_m(0.5);
        // 8 km at 0.5 dB/km is 4 dB
        assert!((linear_to_db((-a * 8000.0).exp()).unwrap() + 4.0).abs() < 1e-12);
        assert!((per_m_to_db_per_km(a) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn photon_energy_at_1565nm() {
        // h c / 1565 nm
        let e = photon_energy(1565.0);
        assert!((e - 1.269_294_477e-19).abs() / e < 1e-9, "{e}");
    }

    proptest! {
        #[test]
        fn round_trip(r in 1e-30f64..1e30) {
            let back = db_to_linear(linear_to_db(r).unwrap());
            prop_assert!(((back - r) / r).abs() < 1e-12);
        }
    }
}
