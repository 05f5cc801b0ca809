//! Scenario documents: the on-disk JSON schema and its validation into a
//! fully resolved [`Scenario`].

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::mode::{ModeId, ModeLabel, ModeSet, DEFAULT_GROUPS};
use super::plan::{ChannelEntry, ChannelPlan};
use super::specs::{
    CrosstalkTable, DetectorSpec, DeviceBands, FiberSpec, InterGroupCoupling, MuxDemuxSpec,
    WdmFilterSpec, DEFAULT_D_RANGE, DEFAULT_INTRA_GROUP_RATE,
};
use super::{ModelError, Violation, Violations};
use crate::counting::CountingConfig;
use crate::devices::mux_from_measurements;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum InterGroupSection {
    /// One `D` for every pair of distinct groups.
    Uniform(f64),
    /// `[g, g', D]` triplets with 1-based groups; unlisted pairs are zero.
    Pairs(Vec<(usize, usize, f64)>),
}

impl Default for InterGroupSection {
    fn default() -> Self {
        Self::Pairs(Vec::new())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FiberSection {
    pub length_m: f64,
    #[serde(default = "default_groups")]
    pub groups: usize,
    #[serde(default = "default_intra")]
    pub intra_group_rate_per_m: f64,
    #[serde(default)]
    pub inter_group_d_per_m: InterGroupSection,
    #[serde(default = "default_d_range")]
    pub admissible_d_range_per_m: [f64; 2],
    #[serde(default, skip_serializing_if = "is_zero")]
    pub attenuation_db_per_km: f64,
    /// Extra attenuation added per group above the first, dB/km.
    #[serde(default, skip_serializing_if = "is_zero")]
    pub attenuation_step_db_per_km: f64,
    /// Per-mode attenuation in 1/m; overrides the dB/km figures when present.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub attenuation_per_m: Option<Vec<f64>>,
}

fn default_groups() -> usize {
    DEFAULT_GROUPS
}
fn default_intra() -> f64 {
    DEFAULT_INTRA_GROUP_RATE
}
fn default_d_range() -> [f64; 2] {
    [DEFAULT_D_RANGE.0, DEFAULT_D_RANGE.1]
}
fn is_zero(x: &f64) -> bool {
    *x == 0.0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum IlConvention {
    /// Signed dB transmission, negative for loss.
    #[default]
    Transmission,
    /// Positive loss magnitudes; negated on load.
    Loss,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DbValues {
    Uniform(f64),
    PerMode(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MuxDemuxSection {
    pub insertion_loss_db: DbValues,
    #[serde(default)]
    pub il_convention: IlConvention,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub group_crosstalk_db: Option<Vec<Vec<Option<f64>>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mode_crosstalk_db: Option<Vec<Vec<Option<f64>>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wavelength_range_nm: Option<[f64; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DeviceSection {
    Single(MuxDemuxSection),
    Bands(Vec<MuxDemuxSection>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectorsSection {
    pub herald: DetectorSpec,
    pub idler: DetectorSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSection {
    /// Classical output powers at the DeMUX port of each classical channel, W.
    pub output_powers_w: Vec<f64>,
    /// Output modes whose SNR is reported; defaults to the quantum channels.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub monitor: Vec<ModeLabel>,
}

/// A scenario document as written on disk. Every section is optional at the
/// parse level so that missing sections are reported as violations.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ScenarioFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fiber: Option<FiberSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mux: Option<DeviceSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub demux: Option<DeviceSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wdm_filters: Option<Vec<WdmFilterSpec>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detectors: Option<DetectorsSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub channels: Option<Vec<ChannelEntry>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub counting: Option<CountingConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSection>,
}

impl ScenarioFile {
    pub fn from_json(text: &str) -> Result<Self, ModelError> {
        serde_json::from_str(text).map_err(|e| ModelError::Parse(e.to_string()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub output_powers_w: Vec<f64>,
    pub monitor: Vec<ModeId>,
}

/// A validated scenario with all cross-references resolved.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub description: Option<String>,
    pub fiber: FiberSpec,
    pub mux: DeviceBands,
    pub demux: DeviceBands,
    pub wdm_filters: Vec<WdmFilterSpec>,
    pub herald_detector: DetectorSpec,
    pub idler_detector: DetectorSpec,
    pub channels: ChannelPlan,
    pub counting: CountingConfig,
    pub sweep: Option<SweepSpec>,
}

impl Scenario {
    pub fn modes(&self) -> ModeSet {
        self.fiber.modes
    }

    /// Reads and validates a scenario file.
    pub fn load(path: &Path) -> Result<Result<Self, ModelError>, std::io::Error> {
        let text = std::fs::read_to_string(path)?;
        Ok(Self::from_json(&text))
    }

    pub fn from_json(text: &str) -> Result<Self, ModelError> {
        validate_scenario(&ScenarioFile::from_json(text)?)
    }

    /// The filter in front of the single-photon detectors, if any.
    pub fn counting_filter(&self) -> Option<&WdmFilterSpec> {
        let name = self.counting.filter.as_deref()?;
        self.wdm_filters.iter().find(|f| f.name == name)
    }

    /// Output modes whose SNR is reported.
    pub fn monitored_modes(&self) -> Vec<ModeId> {
        match &self.sweep {
            Some(s) if !s.monitor.is_empty() => s.monitor.clone(),
            _ => {
                let mut modes: Vec<ModeId> = self.channels.quantum().map(|c| c.mode).collect();
                modes.sort();
                modes.dedup();
                modes
            }
        }
    }

    /// Canonical file form. Validating it yields this scenario again.
    pub fn to_file(&self) -> ScenarioFile {
        let fiber = &self.fiber;
        let pairs = fiber
            .inter_group
            .pairs()
            .filter(|&(_, _, d)| d != 0.0)
            .map(|(a, b, d)| (a + 1, b + 1, d))
            .collect();
        let device = |bands: &DeviceBands| {
            let sections: Vec<MuxDemuxSection> = bands
                .0
                .iter()
                .map(|spec| {
                    let (group_crosstalk_db, mode_crosstalk_db) = match &spec.crosstalk {
                        CrosstalkTable::None => (None, None),
                        CrosstalkTable::Group(t) => (Some(t.clone()), None),
                        CrosstalkTable::Mode(t) => (None, Some(t.clone())),
                    };
                    let (lo, hi) = spec.wavelength_range_nm;
                    MuxDemuxSection {
                        insertion_loss_db: DbValues::PerMode(spec.insertion_loss_db.clone()),
                        il_convention: IlConvention::Transmission,
                        group_crosstalk_db,
                        mode_crosstalk_db,
                        wavelength_range_nm: (lo > 0.0 || hi.is_finite()).then_some([lo, hi]),
                    }
                })
                .collect();
            if sections.len() == 1 {
                DeviceSection::Single(sections.into_iter().next().unwrap())
            } else {
                DeviceSection::Bands(sections)
            }
        };
        ScenarioFile {
            name: Some(self.name.clone()),
            description: self.description.clone(),
            fiber: Some(FiberSection {
                length_m: fiber.length_m,
                groups: fiber.modes.groups(),
                intra_group_rate_per_m: fiber.intra_group_rate,
                inter_group_d_per_m: InterGroupSection::Pairs(pairs),
                admissible_d_range_per_m: [fiber.admissible_d.0, fiber.admissible_d.1],
                attenuation_db_per_km: 0.0,
                attenuation_step_db_per_km: 0.0,
                attenuation_per_m: Some(fiber.attenuation.clone()),
            }),
            mux: Some(device(&self.mux)),
            demux: Some(device(&self.demux)),
            wdm_filters: Some(self.wdm_filters.clone()),
            detectors: Some(DetectorsSection {
                herald: self.herald_detector.clone(),
                idler: self.idler_detector.clone(),
            }),
            channels: Some(
                self.channels
                    .channels
                    .iter()
                    .map(ChannelEntry::from_channel)
                    .collect(),
            ),
            counting: Some(self.counting.clone()),
            sweep: self.sweep.as_ref().map(|s| SweepSection {
                output_powers_w: s.output_powers_w.clone(),
                monitor: s.monitor.iter().map(|&m| m.into()).collect(),
            }),
        }
    }

    /// SHA-256 of the canonical JSON form, hex encoded.
    pub fn content_hash(&self) -> String {
        let text = serde_json::to_string(&self.to_file()).expect("scenario serializes");
        hex::encode(Sha256::digest(text.as_bytes()))
    }

    /// First 16 hex digits of [`Self::content_hash`].
    pub fn short_hash(&self) -> String {
        self.content_hash()[..16].to_string()
    }
}

/// Resolves a scenario document, returning either the normalized scenario or
/// every violation found.
pub fn validate_scenario(file: &ScenarioFile) -> Result<Scenario, ModelError> {
    let mut v = Vec::new();
    let missing =
        |v: &mut Vec<Violation>, name: &str| v.push(Violation::new(name, "missing section"));

    let fiber = match &file.fiber {
        Some(section) => validate_fiber(section, &mut v),
        None => {
            missing(&mut v, "fiber");
            None
        }
    };
    let modes = fiber.as_ref().map(|f| f.modes).unwrap_or_default();

    let mux = match &file.mux {
        Some(section) => validate_device("mux", section, modes, &mut v),
        None => {
            missing(&mut v, "mux");
            None
        }
    };
    let demux = match &file.demux {
        Some(section) => validate_device("demux", section, modes, &mut v),
        None => {
            missing(&mut v, "demux");
            None
        }
    };

    let filters = file.wdm_filters.clone().unwrap_or_default();
    for (i, f) in filters.iter().enumerate() {
        let path = format!("wdm_filters[{i}]");
        if filters[..i].iter().any(|g| g.name == f.name) {
            v.push(Violation::new(
                &path,
                format!("duplicate filter name {:?}", f.name),
            ));
        }
        if !(f.bandwidth_nm > 0.0) {
            v.push(Violation::new(
                format!("{path}.bandwidth_nm"),
                "must be positive",
            ));
        }
        if !(f.extinction_db > 0.0) {
            v.push(Violation::new(
                format!("{path}.extinction_db"),
                "must be positive",
            ));
        }
        if !(f.passband_loss_db <= 0.0 && f.passband_loss_db.is_finite()) {
            v.push(Violation::new(
                format!("{path}.passband_loss_db"),
                "must be a finite transmission of at most 0 dB",
            ));
        }
    }

    let detectors = match &file.detectors {
        Some(d) => {
            for (name, spec) in [("herald", &d.herald), ("idler", &d.idler)] {
                if !(0.0..=1.0).contains(&spec.efficiency) {
                    v.push(Violation::new(
                        format!("detectors.{name}.efficiency"),
                        format!("must lie in [0, 1], got {}", spec.efficiency),
                    ));
                }
                if !(spec.dark_rate_hz >= 0.0 && spec.dark_rate_hz.is_finite()) {
                    v.push(Violation::new(
                        format!("detectors.{name}.dark_rate_hz"),
                        format!("must be nonnegative, got {}", spec.dark_rate_hz),
                    ));
                }
            }
            Some(d.clone())
        }
        None => {
            missing(&mut v, "detectors");
            None
        }
    };

    let counting = match &file.counting {
        Some(c) => {
            for (name, value) in [
                ("pair_rate_in_hz", c.pair_rate_in_hz),
                ("window_s", c.window_s),
                ("acquisition_s", c.acquisition_s),
            ] {
                if !(value > 0.0 && value.is_finite()) {
                    v.push(Violation::new(
                        format!("counting.{name}"),
                        format!("must be positive, got {value}"),
                    ));
                }
            }
            if c.repetitions == 0 {
                v.push(Violation::new("counting.repetitions", "must be positive"));
            }
            if let Some(name) = &c.filter {
                if !filters.iter().any(|f| &f.name == name) {
                    v.push(Violation::new(
                        "counting.filter",
                        format!("unknown filter {name:?}"),
                    ));
                }
            }
            if let Some(il) = &c.normalization_il_db {
                if il.len() != modes.len() {
                    v.push(Violation::new(
                        "counting.normalization_il_db",
                        format!("expected {} entries, got {}", modes.len(), il.len()),
                    ));
                }
                if il.iter().any(|x| !(x.is_finite() && *x <= 0.0)) {
                    v.push(Violation::new(
                        "counting.normalization_il_db",
                        "entries must be finite dB transmissions of at most 0 dB",
                    ));
                }
            }
            Some(c.clone())
        }
        None => {
            missing(&mut v, "counting");
            None
        }
    };

    let mut channels = Vec::new();
    match &file.channels {
        Some(entries) => {
            for (i, entry) in entries.iter().enumerate() {
                if let Some(channel) = entry.resolve(&modes, i, &mut v) {
                    channels.push((i, channel));
                }
            }
        }
        None => missing(&mut v, "channels"),
    }
    let plan = ChannelPlan::new(channels.iter().map(|(_, c)| c.clone()).collect());
    v.extend(plan.violations());

    let counting_filter = counting
        .as_ref()
        .and_then(|c| c.filter.as_ref())
        .and_then(|name| filters.iter().find(|f| &f.name == name));
    for (i, channel) in &channels {
        let path = format!("channels[{i}].wavelength_nm");
        for (name, bands) in [("mux", &mux), ("demux", &demux)] {
            if let Some(bands) = bands {
                if bands.for_wavelength(channel.wavelength_nm).is_none() {
                    v.push(Violation::new(
                        &path,
                        format!(
                            "{} nm is outside the {name} validity range",
                            channel.wavelength_nm
                        ),
                    ));
                }
            }
        }
        if channel.is_quantum() {
            if let Some(f) = counting_filter {
                if !f.in_band(channel.wavelength_nm) {
                    v.push(Violation::new(
                        &path,
                        format!(
                            "quantum channel at {} nm is outside the passband of counting filter {:?}",
                            channel.wavelength_nm, f.name
                        ),
                    ));
                }
            }
        }
    }

    let sweep = file.sweep.as_ref().and_then(|s| {
        let mut ok = true;
        if s.output_powers_w
            .iter()
            .any(|p| !(p.is_finite() && *p >= 0.0))
        {
            v.push(Violation::new(
                "sweep.output_powers_w",
                "powers must be finite and nonnegative",
            ));
            ok = false;
        }
        if s.output_powers_w.windows(2).any(|w| w[1] <= w[0]) {
            v.push(Violation::new(
                "sweep.output_powers_w",
                "powers must be strictly increasing",
            ));
            ok = false;
        }
        let mut monitor = Vec::new();
        for (i, label) in s.monitor.iter().enumerate() {
            match modes.mode_index(label.m, label.n) {
                Ok(mode) => monitor.push(mode),
                Err(e) => {
                    v.push(Violation::new(
                        format!("sweep.monitor[{i}]"),
                        format!("unknown mode: {e}"),
                    ));
                    ok = false;
                }
            }
        }
        ok.then(|| SweepSpec {
            output_powers_w: s.output_powers_w.clone(),
            monitor,
        })
    });

    if !v.is_empty() {
        return Err(ModelError::Invalid(Violations(v)));
    }
    let detectors = detectors.expect("checked above");
    Ok(Scenario {
        name: file.name.clone().unwrap_or_else(|| "unnamed".to_string()),
        description: file.description.clone(),
        fiber: fiber.expect("checked above"),
        mux: mux.expect("checked above"),
        demux: demux.expect("checked above"),
        wdm_filters: filters,
        herald_detector: detectors.herald,
        idler_detector: detectors.idler,
        channels: plan,
        counting: counting.expect("checked above"),
        sweep,
    })
}

fn validate_fiber(s: &FiberSection, v: &mut Vec<Violation>) -> Option<FiberSpec> {
    let before = v.len();
    let modes = match ModeSet::new(s.groups) {
        Ok(m) => m,
        Err(e) => {
            v.push(Violation::new("fiber.groups", e.to_string()));
            return None;
        }
    };
    if !(s.length_m > 0.0 && s.length_m.is_finite()) {
        v.push(Violation::new(
            "fiber.length_m",
            format!("must be positive, got {}", s.length_m),
        ));
    }
    if !(s.intra_group_rate_per_m >= 0.0 && s.intra_group_rate_per_m.is_finite()) {
        v.push(Violation::new(
            "fiber.intra_group_rate_per_m",
            "must be nonnegative",
        ));
    }
    let [lo, hi] = s.admissible_d_range_per_m;
    if !(lo > 0.0 && hi >= lo && hi.is_finite()) {
        v.push(Violation::new(
            "fiber.admissible_d_range_per_m",
            format!("must satisfy 0 < lo <= hi, got [{lo}, {hi}]"),
        ));
    }
    let q = modes.groups();
    let in_range = |d: f64| d == 0.0 || (d >= lo && d <= hi);
    let mut inter = InterGroupCoupling::zero(q);
    match &s.inter_group_d_per_m {
        InterGroupSection::Uniform(d) => {
            if !in_range(*d) {
                v.push(Violation::new(
                    "fiber.inter_group_d_per_m",
                    format!("{d} 1/m is outside the admissible range [{lo}, {hi}]"),
                ));
            }
            inter = InterGroupCoupling::uniform(q, *d);
        }
        InterGroupSection::Pairs(pairs) => {
            let mut set = vec![vec![false; q]; q];
            for (i, &(a, b, d)) in pairs.iter().enumerate() {
                let path = format!("fiber.inter_group_d_per_m[{i}]");
                if a == 0 || b == 0 || a > q || b > q || a == b {
                    v.push(Violation::new(
                        path,
                        format!("invalid group pair ({a}, {b}) for {q} groups"),
                    ));
                    continue;
                }
                if !(d.is_finite() && in_range(d)) {
                    v.push(Violation::new(
                        &path,
                        format!("{d} 1/m is outside the admissible range [{lo}, {hi}]"),
                    ));
                }
                let (a, b) = (a - 1, b - 1);
                if set[a][b] && inter.get(a, b) != d {
                    v.push(Violation::new(
                        &path,
                        format!(
                            "conflicting values for pair ({}, {}): D must be symmetric",
                            a + 1,
                            b + 1
                        ),
                    ));
                }
                set[a][b] = true;
                set[b][a] = true;
                inter.set(a, b, d);
            }
        }
    }
    let attenuation = match &s.attenuation_per_m {
        Some(list) => {
            if list.len() != modes.len() {
                v.push(Violation::new(
                    "fiber.attenuation_per_m",
                    format!("expected {} entries, got {}", modes.len(), list.len()),
                ));
            }
            list.clone()
        }
        None => super::specs::graded_attenuation(
            modes,
            s.attenuation_db_per_km,
            s.attenuation_step_db_per_km,
        ),
    };
    if attenuation.iter().any(|a| !(a.is_finite() && *a >= 0.0)) {
        v.push(Violation::new(
            "fiber.attenuation",
            "attenuation must be nonnegative for every mode",
        ));
    }
    (v.len() == before).then_some(FiberSpec {
        length_m: s.length_m,
        modes,
        intra_group_rate: s.intra_group_rate_per_m,
        inter_group: inter,
        attenuation,
        admissible_d: (lo, hi),
    })
}

fn validate_device(
    name: &str,
    section: &DeviceSection,
    modes: ModeSet,
    v: &mut Vec<Violation>,
) -> Option<DeviceBands> {
    let sections: Vec<&MuxDemuxSection> = match section {
        DeviceSection::Single(s) => vec![s],
        DeviceSection::Bands(list) => list.iter().collect(),
    };
    if sections.is_empty() {
        v.push(Violation::new(name, "at least one band is required"));
        return None;
    }
    let before = v.len();
    let mut bands = Vec::new();
    for (i, s) in sections.iter().enumerate() {
        let path = if sections.len() == 1 {
            name.to_string()
        } else {
            format!("{name}[{i}]")
        };
        let sign = match s.il_convention {
            IlConvention::Transmission => 1.0,
            IlConvention::Loss => -1.0,
        };
        let il: Vec<f64> = match &s.insertion_loss_db {
            DbValues::Uniform(x) => vec![sign * x; modes.len()],
            DbValues::PerMode(list) => {
                if list.len() != modes.len() {
                    v.push(Violation::new(
                        format!("{path}.insertion_loss_db"),
                        format!("expected {} entries, got {}", modes.len(), list.len()),
                    ));
                }
                list.iter().map(|x| sign * x).collect()
            }
        };
        if il.iter().any(|x| !(x.is_finite() && *x <= 0.0)) {
            v.push(Violation::new(
                format!("{path}.insertion_loss_db"),
                "insertion loss must be a finite dB transmission of at most 0 dB (use il_convention = \"loss\" for positive magnitudes)",
            ));
        }
        let check_table =
            |v: &mut Vec<Violation>, field: &str, table: &Vec<Vec<Option<f64>>>, size: usize| {
                if table.len() != size || table.iter().any(|row| row.len() != size) {
                    v.push(Violation::new(
                        format!("{path}.{field}"),
                        format!("must be a {size}x{size} table"),
                    ));
                }
                if table
                    .iter()
                    .flatten()
                    .flatten()
                    .any(|x| !(x.is_finite() && *x <= 0.0))
                {
                    v.push(Violation::new(
                        format!("{path}.{field}"),
                        "cells must be finite and at most 0 dB",
                    ));
                }
            };
        let crosstalk = match (&s.group_crosstalk_db, &s.mode_crosstalk_db) {
            (None, None) => CrosstalkTable::None,
            (Some(t), None) => {
                check_table(v, "group_crosstalk_db", t, modes.groups());
                CrosstalkTable::Group(t.clone())
            }
            (None, Some(t)) => {
                check_table(v, "mode_crosstalk_db", t, modes.len());
                CrosstalkTable::Mode(t.clone())
            }
            (Some(_), Some(_)) => {
                v.push(Violation::new(
                    &path,
                    "give either group_crosstalk_db or mode_crosstalk_db, not both",
                ));
                CrosstalkTable::None
            }
        };
        let range = match s.wavelength_range_nm {
            Some([lo, hi]) => {
                if !(lo <= hi) {
                    v.push(Violation::new(
                        format!("{path}.wavelength_range_nm"),
                        "lower bound exceeds upper",
                    ));
                }
                (lo, hi)
            }
            None => (0.0, f64::INFINITY),
        };
        let spec = MuxDemuxSpec {
            insertion_loss_db: il,
            crosstalk,
            wavelength_range_nm: range,
        };
        if v.len() == before {
            if let Err(e) = mux_from_measurements(&spec, modes) {
                v.push(Violation::new(&path, e.to_string()));
            }
        }
        bands.push(spec);
    }
    (v.len() == before).then_some(DeviceBands(bands))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn reference_plan_json() -> &'static str {
        r#"{
          "name": "reference plan",
          "fiber": { "length_m": 8000, "inter_group_d_per_m": 1e-5, "attenuation_db_per_km": 0.5 },
          "mux": { "insertion_loss_db": 4.2, "il_convention": "loss", "wavelength_range_nm": [1500, 1600] },
          "demux": { "insertion_loss_db": -4.2 },
          "wdm_filters": [
            { "name": "q1540", "center_nm": 1540, "extinction_db": 40 },
            { "name": "c1565", "center_nm": 1565, "extinction_db": 40 }
          ],
          "detectors": {
            "herald": { "label": "APD", "efficiency": 1.0, "dark_rate_hz": 20000 },
            "idler": { "label": "ID230", "efficiency": 1.0, "dark_rate_hz": 50 }
          },
          "channels": [
            { "kind": "quantum", "mode": [0, 0], "wavelength_nm": 1540, "pair_rate_hz": 866.7 },
            { "kind": "quantum", "mode": [1, 1], "wavelength_nm": 1540, "pair_rate_hz": 866.7 },
            { "kind": "quantum", "mode": [2, 2], "wavelength_nm": 1540, "pair_rate_hz": 866.7 },
            { "kind": "classical", "mode": [1, 0], "wavelength_nm": 1565, "power_w": 1e-6 },
            { "kind": "classical", "mode": [2, 1], "wavelength_nm": 1565, "power_w": 1e-6 }
          ],
          "counting": { "pair_rate_in_hz": 2600, "window_s": 4e-9, "acquisition_s": 3,
                        "repetitions": 100, "seed": 7, "filter": "q1540" }
        }"#
    }

    fn violations(err: ModelError) -> Vec<Violation> {
        match err {
            ModelError::Invalid(v) => v.0,
            other => panic!("expected violations, got {other}"),
        }
    }

    #[test]
    fn reference_plan_is_valid() {
        let s = Scenario::from_json(reference_plan_json()).unwrap();
        assert_eq!(s.channels.channels.len(), 5);
        assert_eq!(s.mux.0[0].insertion_loss_db[0], -4.2);
        assert_eq!(s.monitored_modes().len(), 3);
        assert_eq!(s.counting_filter().unwrap().center_nm, 1540.0);
    }

    #[test]
    fn duplicate_assignment_is_rejected() {
        let mut file = ScenarioFile::from_json(reference_plan_json()).unwrap();
        let first = file.channels.as_ref().unwrap()[0].clone();
        file.channels.as_mut().unwrap().push(first);
        let v = violations(validate_scenario(&file).unwrap_err());
        assert_eq!(v.len(), 1);
        assert!(v[0].message.contains("duplicate"), "{:?}", v);
    }

    #[test]
    fn empty_plan_is_valid() {
        let mut file = ScenarioFile::from_json(reference_plan_json()).unwrap();
        file.channels = Some(Vec::new());
        let s = validate_scenario(&file).unwrap();
        assert!(s.channels.channels.is_empty());
    }

    #[test]
    fn all_violations_are_listed() {
        let mut file = ScenarioFile::from_json(reference_plan_json()).unwrap();
        file.fiber.as_mut().unwrap().length_m = 0.0;
        file.channels.as_mut().unwrap()[0].mode = ModeLabel::new(5, 0);
        file.channels.as_mut().unwrap()[3].wavelength_nm = 1700.0;
        file.detectors = None;
        let v = violations(validate_scenario(&file).unwrap_err());
        let paths: Vec<&str> = v.iter().map(|x| x.path.as_str()).collect();
        assert!(paths.contains(&"fiber.length_m"), "{paths:?}");
        assert!(paths.contains(&"channels[0].mode"), "{paths:?}");
        assert!(paths.contains(&"channels[3].wavelength_nm"), "{paths:?}");
        assert!(paths.contains(&"detectors"), "{paths:?}");
    }

    #[test]
    fn missing_fiber_section_is_a_violation() {
        let mut file = ScenarioFile::from_json(reference_plan_json()).unwrap();
        file.fiber = None;
        let v = violations(validate_scenario(&file).unwrap_err());
        assert!(v
            .iter()
            .any(|x| x.path == "fiber" && x.message == "missing section"));
    }

    #[test]
    fn quantum_channel_outside_counting_filter() {
        let mut file = ScenarioFile::from_json(reference_plan_json()).unwrap();
        file.channels.as_mut().unwrap()[0].wavelength_nm = 1550.0;
        let v = violations(validate_scenario(&file).unwrap_err());
        assert!(v[0].message.contains("passband"), "{v:?}");
    }

    #[test]
    fn d_outside_admissible_range() {
        let mut file = ScenarioFile::from_json(reference_plan_json()).unwrap();
        file.fiber.as_mut().unwrap().inter_group_d_per_m =
            InterGroupSection::Pairs(vec![(1, 2, 0.5)]);
        let v = violations(validate_scenario(&file).unwrap_err());
        assert!(v[0].message.contains("admissible"));
    }

    #[test]
    fn asymmetric_pairs_rejected() {
        let mut file = ScenarioFile::from_json(reference_plan_json()).unwrap();
        file.fiber.as_mut().unwrap().inter_group_d_per_m =
            InterGroupSection::Pairs(vec![(1, 2, 1e-5), (2, 1, 2e-5)]);
        let v = violations(validate_scenario(&file).unwrap_err());
        assert!(v[0].message.contains("symmetric"));
    }

    #[test]
    fn positive_transmission_rejected_without_loss_flag() {
        let mut file = ScenarioFile::from_json(reference_plan_json()).unwrap();
        file.demux = Some(DeviceSection::Single(MuxDemuxSection {
            insertion_loss_db: DbValues::Uniform(4.2),
            il_convention: IlConvention::Transmission,
            group_crosstalk_db: None,
            mode_crosstalk_db: None,
            wavelength_range_nm: None,
        }));
        let v = violations(validate_scenario(&file).unwrap_err());
        assert!(v[0].path.starts_with("demux"));
    }

    #[test]
    fn validation_is_idempotent() {
        let s = Scenario::from_json(reference_plan_json()).unwrap();
        let again = validate_scenario(&s.to_file()).unwrap();
        assert_eq!(again, s);
        let json = s.to_file().to_json();
        assert_eq!(Scenario::from_json(&json).unwrap(), s);
        assert_eq!(again.content_hash(), s.content_hash());
    }

    #[test]
    fn parse_error_is_reported() {
        assert!(matches!(
            Scenario::from_json("{ not json"),
            Err(ModelError::Parse(_))
        ));
    }
}
