use serde::{Deserialize, Serialize};

use super::mode::{ModeId, ModeLabel, ModeSet};
use super::Violation;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ChannelKind {
    /// Heralded single photons at a pair rate in Hz.
    Quantum { pair_rate_hz: f64 },
    /// Classical CW light at an optical power in W (launched into the MUX).
    Classical { power_w: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Channel {
    pub mode: ModeId,
    pub wavelength_nm: f64,
    pub kind: ChannelKind,
}

impl Channel {
    pub fn quantum(mode: ModeId, wavelength_nm: f64, pair_rate_hz: f64) -> Self {
        Self {
            mode,
            wavelength_nm,
            kind: ChannelKind::Quantum { pair_rate_hz },
        }
    }

    pub fn classical(mode: ModeId, wavelength_nm: f64, power_w: f64) -> Self {
        Self {
            mode,
            wavelength_nm,
            kind: ChannelKind::Classical { power_w },
        }
    }

    pub fn is_quantum(&self) -> bool {
        matches!(self.kind, ChannelKind::Quantum { .. })
    }
}

/// Assignment of signals to (mode, wavelength) slots.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ChannelPlan {
    pub channels: Vec<Channel>,
}

impl ChannelPlan {
    pub fn new(channels: Vec<Channel>) -> Self {
        Self { channels }
    }

    pub fn quantum(&self) -> impl Iterator<Item = &Channel> {
        self.channels.iter().filter(|c| c.is_quantum())
    }

    pub fn classical(&self) -> impl Iterator<Item = &Channel> {
        self.channels.iter().filter(|c| !c.is_quantum())
    }

    /// Total source pair rate over all quantum channels.
    pub fn total_pair_rate(&self) -> f64 {
        self.quantum()
            .map(|c| match c.kind {
                ChannelKind::Quantum { pair_rate_hz } => pair_rate_hz,
                ChannelKind::Classical { .. } => 0.0,
            })
            .sum()
    }

    /// Reports duplicate (mode, wavelength) assignments and negative or
    /// non-finite rates.
    pub fn violations(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        for (i, a) in self.channels.iter().enumerate() {
            if let Some(j) = self.channels[..i]
                .iter()
                .position(|b| b.mode == a.mode && b.wavelength_nm == a.wavelength_nm)
            {
                out.push(Violation::new(
                    format!("channels[{i}]"),
                    format!(
                        "duplicate assignment of ({}, {} nm), already used by channels[{j}]",
                        a.mode, a.wavelength_nm
                    ),
                ));
            }
            if !(a.wavelength_nm.is_finite() && a.wavelength_nm > 0.0) {
                out.push(Violation::new(
                    format!("channels[{i}].wavelength_nm"),
                    format!("must be positive, got {}", a.wavelength_nm),
                ));
            }
            let (field, value) = match a.kind {
                ChannelKind::Quantum { pair_rate_hz } => ("pair_rate_hz", pair_rate_hz),
                ChannelKind::Classical { power_w } => ("power_w", power_w),
            };
            if !(value.is_finite() && value >= 0.0) {
                out.push(Violation::new(
                    format!("channels[{i}].{field}"),
                    format!("must be nonnegative, got {value}"),
                ));
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChannelKindTag {
    Quantum,
    Classical,
}

/// A channel as written in scenario files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelEntry {
    pub kind: ChannelKindTag,
    pub mode: ModeLabel,
    pub wavelength_nm: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pair_rate_hz: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub power_w: Option<f64>,
}

impl ChannelEntry {
    pub fn resolve(
        &self,
        modes: &ModeSet,
        index: usize,
        violations: &mut Vec<Violation>,
    ) -> Option<Channel> {
        let path = format!("channels[{index}]");
        let mode = match modes.mode_index(self.mode.m, self.mode.n) {
            Ok(mode) => Some(mode),
            Err(e) => {
                violations.push(Violation::new(
                    format!("{path}.mode"),
                    format!("unknown mode: {e}"),
                ));
                None
            }
        };
        let kind = match (self.kind, self.pair_rate_hz, self.power_w) {
            (ChannelKindTag::Quantum, Some(rate), None) => {
                Some(ChannelKind::Quantum { pair_rate_hz: rate })
            }
            (ChannelKindTag::Classical, None, Some(power)) => {
                Some(ChannelKind::Classical { power_w: power })
            }
            (ChannelKindTag::Quantum, _, _) => {
                violations.push(Violation::new(
                    path.clone(),
                    "quantum channels carry pair_rate_hz and no power_w",
                ));
                None
            }
            (ChannelKindTag::Classical, _, _) => {
                violations.push(Violation::new(
                    path.clone(),
                    "classical channels carry power_w and no pair_rate_hz",
                ));
                None
            }
        };
        Some(Channel {
            mode: mode?,
            wavelength_nm: self.wavelength_nm,
            kind: kind?,
        })
    }

    pub fn from_channel(channel: &Channel) -> Self {
        let (kind, pair_rate_hz, power_w) = match channel.kind {
            ChannelKind::Quantum { pair_rate_hz } => {
                (ChannelKindTag::Quantum, Some(pair_rate_hz), None)
            }
            ChannelKind::Classical { power_w } => (ChannelKindTag::Classical, None, Some(power_w)),
        };
        Self {
            kind,
            mode: channel.mode.into(),
            wavelength_nm: channel.wavelength_nm,
            pair_rate_hz,
            power_w,
        }
    }
}
