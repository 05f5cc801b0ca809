//! Fiber, multiplexer, filter and detector specifications.

use serde::{Deserialize, Serialize};

use super::mode::ModeSet;
use crate::units::{db_per_km_to_per_m, db_to_linear};

/// Default admissible range of inter-group coupling coefficients, 1/m.
pub const DEFAULT_D_RANGE: (f64, f64) = (1e-7, 1e-2);

/// Default intra-group coupling rate, 1/m.
pub const DEFAULT_INTRA_GROUP_RATE: f64 = 1.0;

/// Symmetric group-pair coupling coefficients `D(g, g')` in 1/m, zero on the
/// diagonal. Indices are zero-based group indices.
#[derive(Debug, Clone, PartialEq)]
pub struct InterGroupCoupling {
    d: Vec<Vec<f64>>,
}

impl InterGroupCoupling {
    pub fn zero(groups: usize) -> Self {
        Self {
            d: vec![vec![0.0; groups]; groups],
        }
    }

    /// Same `D` between every pair of distinct groups.
    pub fn uniform(groups: usize, d: f64) -> Self {
        let mut out = Self::zero(groups);
        for a in 0..groups {
            for b in 0..groups {
                if a != b {
                    out.d[a][b] = d;
                }
            }
        }
        out
    }

    /// Nearest-neighbour coupling: `adjacent[i]` couples groups `i` and `i + 1`
    /// (zero-based); all other pairs are zero.
    pub fn adjacent(adjacent: &[f64]) -> Self {
        let mut out = Self::zero(adjacent.len() + 1);
        for (i, &d) in adjacent.iter().enumerate() {
            out.set(i, i + 1, d);
        }
        out
    }

    pub fn groups(&self) -> usize {
        self.d.len()
    }

    pub fn get(&self, a: usize, b: usize) -> f64 {
        self.d[a][b]
    }

    /// Sets both `D(a, b)` and `D(b, a)`.
    pub fn set(&mut self, a: usize, b: usize, value: f64) {
        assert_ne!(a, b, "inter-group coupling is undefined on the diagonal");
        self.d[a][b] = value;
        self.d[b][a] = value;
    }

    /// Unordered pairs `(a, b, D)` with `a < b`, including zero entries.
    pub fn pairs(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        let q = self.groups();
        (0..q).flat_map(move |a| (a + 1..q).map(move |b| (a, b, self.d[a][b])))
    }

    pub fn is_symmetric(&self) -> bool {
        let q = self.groups();
        (0..q).all(|a| self.d[a][a] == 0.0 && (0..q).all(|b| self.d[a][b] == self.d[b][a]))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FiberSpec {
    pub length_m: f64,
    pub modes: ModeSet,
    pub intra_group_rate: f64,
    pub inter_group: InterGroupCoupling,
    /// Power attenuation coefficient per mode (zero-based flat index), 1/m.
    pub attenuation: Vec<f64>,
    pub admissible_d: (f64, f64),
}

impl FiberSpec {
    /// Lossless fiber with uniform inter-group coupling.
    pub fn uniform(modes: ModeSet, length_m: f64, intra: f64, d: f64) -> Self {
        Self {
            length_m,
            modes,
            intra_group_rate: intra,
            inter_group: InterGroupCoupling::uniform(modes.groups(), d),
            attenuation: vec![0.0; modes.len()],
            admissible_d: DEFAULT_D_RANGE,
        }
    }

    pub fn with_attenuation(mut self, attenuation: Vec<f64>) -> Self {
        self.attenuation = attenuation;
        self
    }

    pub fn with_inter_group(mut self, inter_group: InterGroupCoupling) -> Self {
        self.inter_group = inter_group;
        self
    }

    pub fn with_length(mut self, length_m: f64) -> Self {
        self.length_m = length_m;
        self
    }

    pub fn mode_count(&self) -> usize {
        self.modes.len()
    }
}

/// Per-mode attenuation from a base figure plus a linear per-group increment,
/// both in dB/km.
pub fn graded_attenuation(
    modes: ModeSet,
    base_db_per_km: f64,
    per_group_db_per_km: f64,
) -> Vec<f64> {
    modes
        .iter()
        .map(|mode| {
            db_per_km_to_per_m(base_db_per_km + per_group_db_per_km * (mode.group() - 1) as f64)
        })
        .collect()
}

/// Cross-talk of a multiplexer in dB of the launched power, indexed
/// `[input][output]`. `None` cells (and the diagonal) carry no leakage.
#[derive(Debug, Clone, PartialEq, Default)]
pub enum CrosstalkTable {
    #[default]
    None,
    /// Q×Q group-level table; leakage into a group is split uniformly over
    /// its member modes.
    Group(Vec<Vec<Option<f64>>>),
    /// M×M mode-level table.
    Mode(Vec<Vec<Option<f64>>>),
}

/// Measured insertion loss and cross-talk of a MUX or DeMUX for one
/// wavelength band.
#[derive(Debug, Clone, PartialEq)]
pub struct MuxDemuxSpec {
    /// Signed dB transmission per input mode (negative for loss).
    pub insertion_loss_db: Vec<f64>,
    pub crosstalk: CrosstalkTable,
    pub wavelength_range_nm: (f64, f64),
}

impl MuxDemuxSpec {
    pub fn ideal(modes: ModeSet) -> Self {
        Self {
            insertion_loss_db: vec![0.0; modes.len()],
            crosstalk: CrosstalkTable::None,
            wavelength_range_nm: (0.0, f64::INFINITY),
        }
    }

    pub fn covers(&self, wavelength_nm: f64) -> bool {
        let (lo, hi) = self.wavelength_range_nm;
        wavelength_nm >= lo && wavelength_nm <= hi
    }
}

/// One device characterized over one or more wavelength bands.
#[derive(Debug, Clone, PartialEq)]
pub struct DeviceBands(pub Vec<MuxDemuxSpec>);

impl DeviceBands {
    pub fn single(spec: MuxDemuxSpec) -> Self {
        Self(vec![spec])
    }

    /// First band whose validity range contains the wavelength.
    pub fn for_wavelength(&self, wavelength_nm: f64) -> Option<&MuxDemuxSpec> {
        self.0.iter().find(|b| b.covers(wavelength_nm))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WdmFilterSpec {
    pub name: String,
    pub center_nm: f64,
    #[serde(default = "default_bandwidth")]
    pub bandwidth_nm: f64,
    /// Signed dB transmission inside the passband (≤ 0).
    #[serde(default)]
    pub passband_loss_db: f64,
    /// Positive out-of-band suppression in dB.
    pub extinction_db: f64,
}

fn default_bandwidth() -> f64 {
    1.0
}

impl WdmFilterSpec {
    pub fn new(name: &str, center_nm: f64, extinction_db: f64) -> Self {
        Self {
            name: name.to_string(),
            center_nm,
            bandwidth_nm: 1.0,
            passband_loss_db: 0.0,
            extinction_db,
        }
    }

    pub fn in_band(&self, wavelength_nm: f64) -> bool {
        (wavelength_nm - self.center_nm).abs() <= self.bandwidth_nm / 2.0
    }

    /// Linear power transmittance at a wavelength.
    pub fn transmittance(&self, wavelength_nm: f64) -> f64 {
        if self.in_band(wavelength_nm) {
            db_to_linear(self.passband_loss_db)
        } else {
            db_to_linear(-self.extinction_db)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectorSpec {
    #[serde(default)]
    pub label: String,
    pub efficiency: f64,
    #[serde(default)]
    pub dark_rate_hz: f64,
}

impl DetectorSpec {
    pub fn new(label: &str, efficiency: f64, dark_rate_hz: f64) -> Self {
        Self {
            label: label.to_string(),
            efficiency,
            dark_rate_hz,
        }
    }

    pub fn ideal(label: &str) -> Self {
        Self::new(label, 1.0, 0.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn inter_group_constructors_are_symmetric() {
        let u = InterGroupCoupling::uniform(5, 1e-5);
        assert!(u.is_symmetric());
        assert_eq!(u.pairs().count(), 10);
        let a = InterGroupCoupling::adjacent(&[1e-6, 2e-6, 3e-6, 4e-6]);
        assert!(a.is_symmetric());
        assert_eq!(a.groups(), 5);
        assert_eq!(a.get(3, 2), 3e-6);
        assert_eq!(a.get(0, 2), 0.0);
    }

    #[test]
    fn filter_transmittance() {
        let f = WdmFilterSpec::new("q", 1540.0, 30.0);
        assert_eq!(f.transmittance(1540.0), 1.0);
        assert_eq!(f.transmittance(1540.5), 1.0);
        assert!((f.transmittance(1565.0) - 1e-3).abs() < 1e-15);
    }

    #[test]
    fn graded_attenuation_increases_by_group() {
        let a = graded_attenuation(ModeSet::default(), 0.5, 0.1);
        assert_eq!(a.len(), 15);
        assert!(a[0] < a[1]);
        assert_eq!(a[1], a[2]);
        assert!(a[14] > a[9]);
    }
}
