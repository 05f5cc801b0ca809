//! Hermite-Gauss mode labels and the quasi-degenerate group structure.
//!
//! Modes with equal `m + n` form one group, so group `g` holds exactly `g`
//! modes and a fiber with `Q` groups supports `Q (Q + 1) / 2` modes. Flat
//! indices run over groups in order and, inside a group, by descending `m`:
//! `HG00; HG10, HG01; HG20, HG11, HG02; ...`.

use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::ModelError;

/// Number of groups of the 15-mode fiber.
pub const DEFAULT_GROUPS: usize = 5;

/// A Hermite-Gauss mode `HG_mn` together with its flat index `p` (1-based)
/// and group `g` (1-based).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ModeId {
    // field order makes the derived ordering follow the flat index
    p: usize,
    g: usize,
    m: u32,
    n: u32,
}

impl ModeId {
    pub fn m(&self) -> u32 {
        self.m
    }
    pub fn n(&self) -> u32 {
        self.n
    }
    /// Flat index, `1..=M`.
    pub fn p(&self) -> usize {
        self.p
    }
    /// Group index, `1..=Q`.
    pub fn group(&self) -> usize {
        self.g
    }
    /// Zero-based flat index for array access.
    pub fn index(&self) -> usize {
        self.p - 1
    }
    pub fn label(&self) -> String {
        format!("HG{}{}", self.m, self.n)
    }
}

impl fmt::Display for ModeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "HG{}{}", self.m, self.n)
    }
}

/// Number of modes in a fiber with `groups` quasi-degenerate groups.
pub const fn mode_count(groups: usize) -> usize {
    groups * (groups + 1) / 2
}

/// First zero-based flat index of group `g`.
const fn group_start(g: usize) -> usize {
    (g - 1) * g / 2
}

/// The ordered mode set of a fiber with `Q` groups.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ModeSet {
    groups: usize,
}

impl Default for ModeSet {
    fn default() -> Self {
        Self {
            groups: DEFAULT_GROUPS,
        }
    }
}

impl ModeSet {
    pub fn new(groups: usize) -> Result<Self, ModelError> {
        if groups == 0 {
            return Err(ModelError::InvalidGroupCount(groups));
        }
        Ok(Self { groups })
    }

    pub fn groups(&self) -> usize {
        self.groups
    }

    pub fn len(&self) -> usize {
        mode_count(self.groups)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Maps `(m, n)` to its mode. Fails when `m + n` exceeds the highest
    /// supported order `Q - 1`.
    pub fn mode_index(&self, m: u32, n: u32) -> Result<ModeId, ModelError> {
        let order = m as usize + n as usize;
        if order >= self.groups {
            return Err(ModelError::ModeNotSupported {
                m,
                n,
                max_order: self.groups - 1,
            });
        }
        let g = order + 1;
        let p = group_start(g) + (g - 1 - m as usize) + 1;
        Ok(ModeId { p, g, m, n })
    }

    /// Inverse lookup from the 1-based flat index.
    pub fn by_p(&self, p: usize) -> Option<ModeId> {
        if p == 0 || p > self.len() {
            return None;
        }
        let idx = p - 1;
        let mut g = 1;
        while group_start(g + 1) <= idx {
            g += 1;
        }
        let offset = idx - group_start(g);
        let m = (g - 1 - offset) as u32;
        let n = (g - 1) as u32 - m;
        Some(ModeId { p, g, m, n })
    }

    pub fn by_index(&self, idx: usize) -> Option<ModeId> {
        self.by_p(idx + 1)
    }

    pub fn iter(&self) -> impl Iterator<Item = ModeId> + '_ {
        (1..=self.len()).filter_map(|p| self.by_p(p))
    }

    /// Zero-based group index of every zero-based mode index.
    pub fn group_of(&self) -> Vec<usize> {
        self.iter().map(|mode| mode.group() - 1).collect()
    }

    /// Zero-based flat indices of the members of group `g` (1-based).
    pub fn group_members(&self, g: usize) -> std::ops::Range<usize> {
        group_start(g)..group_start(g + 1)
    }

    pub fn group_sizes(&self) -> Vec<usize> {
        (1..=self.groups).collect()
    }

    /// Sums a per-mode vector into per-group totals.
    pub fn sum_by_group(&self, per_mode: &[f64]) -> Vec<f64> {
        (1..=self.groups)
            .map(|g| self.group_members(g).map(|i| per_mode[i]).sum())
            .collect()
    }
}

/// Mode label as it appears in scenario files: `[m, n]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ModeLabel {
    pub m: u32,
    pub n: u32,
}

impl ModeLabel {
    pub const fn new(m: u32, n: u32) -> Self {
        Self { m, n }
    }
}

impl From<ModeId> for ModeLabel {
    fn from(mode: ModeId) -> Self {
        Self::new(mode.m, mode.n)
    }
}

impl fmt::Display for ModeLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "HG{}{}", self.m, self.n)
    }
}

impl std::str::FromStr for ModeLabel {
    type Err = ModelError;

    /// Accepts `HG10`, `HG1,0` or `1,0`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || {
            ModelError::Parse(format!(
                "'{s}' is not a mode name (expected e.g. HG10 or 1,0)"
            ))
        };
        let body = s.trim();
        let body = body
            .strip_prefix("HG")
            .or_else(|| body.strip_prefix("hg"))
            .unwrap_or(body);
        let (m, n) = match body.split_once(',') {
            Some((m, n)) => (m.trim(), n.trim()),
            None if body.len() == 2 && body.is_ascii() => body.split_at(1),
            None => return Err(bad()),
        };
        Ok(Self::new(
            m.parse().map_err(|_| bad())?,
            n.parse().map_err(|_| bad())?,
        ))
    }
}

impl Serialize for ModeLabel {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        [self.m, self.n].serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for ModeLabel {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let [m, n] = <[u32; 2]>::deserialize(deserializer)?;
        Ok(Self { m, n })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mode_names_parse() {
        assert_eq!("HG10".parse::<ModeLabel>().unwrap(), ModeLabel::new(1, 0));
        assert_eq!("HG2,1".parse::<ModeLabel>().unwrap(), ModeLabel::new(2, 1));
        assert_eq!(" 0,3".parse::<ModeLabel>().unwrap(), ModeLabel::new(0, 3));
        assert!("HG".parse::<ModeLabel>().is_err());
        assert!("HG123".parse::<ModeLabel>().is_err());
        assert!("LP01".parse::<ModeLabel>().is_err());
    }

    #[test]
    fn shipped_modes_land_in_their_groups() {
        let set = ModeSet::default();
        assert_eq!(set.mode_index(0, 0).unwrap().group(), 1);
        assert_eq!(set.mode_index(1, 0).unwrap().group(), 2);
        assert_eq!(set.mode_index(1, 1).unwrap().group(), 3);
        assert_eq!(set.mode_index(2, 1).unwrap().group(), 4);
        assert_eq!(set.mode_index(2, 2).unwrap().group(), 5);
    }

    #[test]
    fn out_of_range_mode_names_indices() {
        let err = ModeSet::default().mode_index(5, 0).unwrap_err();
        assert_eq!(
            err,
            ModelError::ModeNotSupported {
                m: 5,
                n: 0,
                max_order: 4
            }
        );
        assert!(err.to_string().contains("HG50"));
        assert!(ModeSet::default().mode_index(2, 3).is_err());
    }

    #[test]
    fn ordering_is_group_then_descending_m() {
        let set = ModeSet::default();
        let labels: Vec<String> = set.iter().map(|m| m.label()).collect();
        assert_eq!(
            labels[..6],
            ["HG00", "HG10", "HG01", "HG20", "HG11", "HG02"].map(String::from)
        );
        assert_eq!(labels.last().unwrap(), "HG04");
    }

    #[test]
    fn group_structure_of_fifteen_mode_fiber() {
        let set = ModeSet::default();
        assert_eq!(set.len(), 15);
        assert_eq!(set.group_sizes(), vec![1, 2, 3, 4, 5]);
        let group_of = set.group_of();
        for g in 1..=5 {
            let members = set.group_members(g);
            assert_eq!(members.len(), g);
            assert!(members.clone().all(|i| group_of[i] == g - 1));
        }
        assert_eq!(group_of.len(), 15);
    }

    #[test]
    fn mapping_is_bijective() {
        for groups in 1..=7 {
            let set = ModeSet::new(groups).unwrap();
            let mut seen = std::collections::HashSet::new();
            for m in 0..groups as u32 {
                for n in 0..groups as u32 - m {
                    let mode = set.mode_index(m, n).unwrap();
                    assert_eq!(mode.group(), (m + n + 1) as usize);
                    assert_eq!(set.by_p(mode.p()), Some(mode));
                    assert!(seen.insert(mode.p()));
                }
            }
            assert_eq!(seen.len(), set.len());
            assert_eq!(set.by_p(0), None);
            assert_eq!(set.by_p(set.len() + 1), None);
        }
    }

    #[test]
    fn label_serializes_as_pair() {
        let label = ModeLabel::new(2, 1);
        assert_eq!(serde_json::to_string(&label).unwrap(), "[2,1]");
        let back: ModeLabel = serde_json::from_str("[2,1]").unwrap();
        assert_eq!(back, label);
    }
}
