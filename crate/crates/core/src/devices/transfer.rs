use nalgebra::{DMatrix, DVector};

use super::DeviceError;
use crate::model::{CrosstalkTable, ModeSet, MuxDemuxSpec, WdmFilterSpec};
use crate::units::db_to_linear;

/// Linear power transmittances `t[(out, in)]` of a passive device for one
/// wavelength band. Column `p` is the response to unit power launched into
/// mode `p`.
#[derive(Debug, Clone, PartialEq)]
pub struct TransferMatrix {
    pub t: DMatrix<f64>,
    pub wavelength_band_nm: (f64, f64),
}

impl TransferMatrix {
    pub fn identity(n: usize) -> Self {
        Self {
            t: DMatrix::identity(n, n),
            wavelength_band_nm: (0.0, f64::INFINITY),
        }
    }

    pub fn from_matrix(t: DMatrix<f64>, wavelength_band_nm: (f64, f64)) -> Self {
        Self {
            t,
            wavelength_band_nm,
        }
    }

    pub fn size(&self) -> usize {
        self.t.ncols()
    }

    /// Total output for unit input on each channel.
    pub fn column_totals(&self) -> Vec<f64> {
        self.t.column_iter().map(|c| c.sum()).collect()
    }

    /// `next ∘ self`: light passes through `self` first.
    pub fn then(&self, next: &TransferMatrix) -> TransferMatrix {
        TransferMatrix {
            t: &next.t * &self.t,
            wavelength_band_nm: (
                self.wavelength_band_nm.0.max(next.wavelength_band_nm.0),
                self.wavelength_band_nm.1.min(next.wavelength_band_nm.1),
            ),
        }
    }

    /// True when entries lie in `[0, 1]` and every column sums to at most one.
    pub fn is_passive(&self) -> bool {
        self.t.iter().all(|&x| (0.0..=1.0).contains(&x))
            && self.column_totals().iter().all(|&s| s <= 1.0 + 1e-12)
    }
}

/// Builds the transfer matrix of a measured MUX/DeMUX. Cross-talk cells set
/// the off-diagonal transmittances; the diagonal takes what is left of the
/// channel's insertion-loss budget so that column `p` totals
/// `10^(IL_p / 10)`.
pub fn mux_from_measurements(
    spec: &MuxDemuxSpec,
    modes: ModeSet,
) -> Result<TransferMatrix, DeviceError> {
    let m = modes.len();
    if spec.insertion_loss_db.len() != m {
        return Err(DeviceError::DimensionMismatch {
            expected: m,
            found: spec.insertion_loss_db.len(),
        });
    }
    let group_of = modes.group_of();
    let mut t = DMatrix::zeros(m, m);
    for p in 0..m {
        for q in (0..m).filter(|&q| q != p) {
            let cell = match &spec.crosstalk {
                CrosstalkTable::None => None,
                CrosstalkTable::Mode(table) => table[p][q].map(db_to_linear),
                CrosstalkTable::Group(table) => {
                    let (gp, gq) = (group_of[p], group_of[q]);
                    // group cells describe leakage between distinct groups only
                    if gp == gq {
                        None
                    } else {
                        table[gp][gq].map(|db| db_to_linear(db) / (gq + 1) as f64)
                    }
                }
            };
            t[(q, p)] = cell.unwrap_or(0.0);
        }
    }
    for p in 0..m {
        let total = db_to_linear(spec.insertion_loss_db[p]);
        let leakage: f64 = t.column(p).sum();
        if leakage >= total {
            return Err(DeviceError::InfeasibleDevice {
                input: p + 1,
                leakage,
                total,
            });
        }
        t[(p, p)] = total - leakage;
    }
    Ok(TransferMatrix {
        t,
        wavelength_band_nm: spec.wavelength_range_nm,
    })
}

pub fn apply_transfer(tm: &TransferMatrix, input: &[f64]) -> Result<Vec<f64>, DeviceError> {
    if input.len() != tm.size() {
        return Err(DeviceError::DimensionMismatch {
            expected: tm.size(),
            found: input.len(),
        });
    }
    if input.iter().any(|&x| x < 0.0 || x.is_nan()) {
        return Err(DeviceError::NegativeInput);
    }
    let out = &tm.t * DVector::from_column_slice(input);
    Ok(out.iter().copied().collect())
}

/// Power after a WDM filter at the given wavelength.
pub fn apply_wdm_filter(filter: &WdmFilterSpec, wavelength_nm: f64, power: f64) -> f64 {
    power * filter.transmittance(wavelength_nm)
}
