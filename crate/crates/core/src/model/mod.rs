//! Domain types: modes and groups, fiber and device specifications, channel
//! plans, and scenario files with their validation.

mod mode;
mod plan;
mod scenario;
mod specs;

use std::fmt;

use thiserror::Error;

pub use mode::{mode_count, ModeId, ModeLabel, ModeSet, DEFAULT_GROUPS};
pub use plan::{Channel, ChannelEntry, ChannelKind, ChannelKindTag, ChannelPlan};
pub use scenario::{
    validate_scenario, DetectorsSection, DeviceSection, FiberSection, IlConvention,
    InterGroupSection, MuxDemuxSection, Scenario, ScenarioFile, SweepSection, SweepSpec,
};
pub use specs::{
    graded_attenuation, CrosstalkTable, DetectorSpec, DeviceBands, FiberSpec, InterGroupCoupling,
    MuxDemuxSpec, WdmFilterSpec, DEFAULT_D_RANGE, DEFAULT_INTRA_GROUP_RATE,
};

/// One problem found while validating a scenario, located by a dotted path.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub path: String,
    pub message: String,
}

impl Violation {
    pub fn new(path: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            path: path.into(),
            message: message.into(),
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.path, self.message)
    }
}

/// The complete list of violations of a rejected scenario.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violations(pub Vec<Violation>);

impl fmt::Display for Violations {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, v) in self.0.iter().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            write!(f, "{v}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("mode HG{m}{n} is not supported: m + n must be at most {max_order}")]
    ModeNotSupported { m: u32, n: u32, max_order: usize },
    #[error("a fiber needs at least one mode group, got {0}")]
    InvalidGroupCount(usize),
    #[error("scenario is invalid ({count} violation(s)):\n{0}", count = .0 .0.len())]
    Invalid(Violations),
    #[error("scenario could not be parsed: {0}")]
    Parse(String),
}
