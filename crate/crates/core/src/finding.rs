//! The fixed 14-type finding vocabulary and multi-hot labels over it.
//!
//! Index order is frozen: 0 = No Finding through 13 = Support Devices.
//! Every label in the system is a subset of these 14 bits, with the rule
//! that No Finding never co-occurs with any other bit.

use std::fmt;

use serde::de::{self, Deserializer, SeqAccess, Visitor};
use serde::ser::{SerializeSeq, Serializer};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of finding types. Fixed.
pub const FINDING_COUNT: usize = 14;

/// The 14 finding types, in frozen index order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[repr(u8)]
pub enum FindingType {
    NoFinding = 0,
    EnlargedCardiomediastinum = 1,
    Cardiomegaly = 2,
    LungOpacity = 3,
    LungLesion = 4,
    Edema = 5,
    Consolidation = 6,
    Pneumonia = 7,
    Atelectasis = 8,
    Pneumothorax = 9,
    PleuralEffusion = 10,
    PleuralOther = 11,
    Fracture = 12,
    SupportDevices = 13,
}

impl FindingType {
    pub const ALL: [FindingType; FINDING_COUNT] = [
        FindingType::NoFinding,
        FindingType::EnlargedCardiomediastinum,
        FindingType::Cardiomegaly,
        FindingType::LungOpacity,
        FindingType::LungLesion,
        FindingType::Edema,
        FindingType::Consolidation,
        FindingType::Pneumonia,
        FindingType::Atelectasis,
        FindingType::Pneumothorax,
        FindingType::PleuralEffusion,
        FindingType::PleuralOther,
        FindingType::Fracture,
        FindingType::SupportDevices,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(index: usize) -> Option<FindingType> {
        FindingType::ALL.get(index).copied()
    }

    /// Canonical display name, matching the conventional label headers.
    pub fn canonical_name(self) -> &'static str {
        match self {
            FindingType::NoFinding => "No Finding",
            FindingType::EnlargedCardiomediastinum => "Enlarged Cardiomediastinum",
            FindingType::Cardiomegaly => "Cardiomegaly",
            FindingType::LungOpacity => "Lung Opacity",
            FindingType::LungLesion => "Lung Lesion",
            FindingType::Edema => "Edema",
            FindingType::Consolidation => "Consolidation",
            FindingType::Pneumonia => "Pneumonia",
            FindingType::Atelectasis => "Atelectasis",
            FindingType::Pneumothorax => "Pneumothorax",
            FindingType::PleuralEffusion => "Pleural Effusion",
            FindingType::PleuralOther => "Pleural Other",
            FindingType::Fracture => "Fracture",
            FindingType::SupportDevices => "Support Devices",
        }
    }

    /// Case- and whitespace-insensitive lookup by canonical name.
    pub fn from_canonical_name(name: &str) -> Option<FindingType> {
        let wanted = normalize_name(name);
        FindingType::ALL
            .iter()
            .copied()
            .find(|f| normalize_name(f.canonical_name()) == wanted)
    }
}

impl fmt::Display for FindingType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.canonical_name())
    }
}

impl Serialize for FindingType {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.serialize_str(self.canonical_name())
    }
}

impl<'de> Deserialize<'de> for FindingType {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let name = String::deserialize(deserializer)?;
        FindingType::from_canonical_name(&name)
            .ok_or_else(|| de::Error::custom(format!("unknown finding type: {name:?}")))
    }
}

fn normalize_name(name: &str) -> String {
    name.split_whitespace()
        .map(|w| w.to_ascii_lowercase())
        .collect::<Vec<_>>()
        .join(" ")
}

/// A 14-bit multi-hot label over [`FindingType`].
///
/// Stored as a bitmask; bit i corresponds to `FindingType::from_index(i)`.
/// The all-zero value means "unlabeled" (no evidence either way).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct FindingLabel(u16);

impl FindingLabel {
    /// The all-zero (unlabeled) label.
    pub fn empty() -> FindingLabel {
        FindingLabel(0)
    }

    /// Label with exactly one bit set.
    pub fn single(finding: FindingType) -> FindingLabel {
        FindingLabel(1 << finding.index() as u16)
    }

    /// Label from a set of findings. Rejects the combination of
    /// No Finding with any other bit.
    pub fn from_findings(findings: &[FindingType]) -> Result<FindingLabel> {
        let mut bits = 0u16;
        for f in findings {
            bits |= 1 << f.index() as u16;
        }
        let label = FindingLabel(bits);
        label.validate()?;
        Ok(label)
    }

    /// Label from a dense 0/1 vector of length 14.
    pub fn from_dense(dense: &[u8]) -> Result<FindingLabel> {
        if dense.len() != FINDING_COUNT {
            return Err(Error::InvalidLabel(format!(
                "expected {FINDING_COUNT} components, got {}",
                dense.len()
            )));
        }
        let mut bits = 0u16;
        for (i, &v) in dense.iter().enumerate() {
            match v {
                0 => {}
                1 => bits |= 1 << i as u16,
                other => {
                    return Err(Error::InvalidLabel(format!(
                        "component {i} is {other}, expected 0 or 1"
                    )))
                }
            }
        }
        let label = FindingLabel(bits);
        label.validate()?;
        Ok(label)
    }

    pub fn get(self, finding: FindingType) -> bool {
        self.0 & (1 << finding.index() as u16) != 0
    }

    pub(crate) fn set(&mut self, finding: FindingType) {
        self.0 |= 1 << finding.index() as u16;
    }

    pub(crate) fn clear(&mut self, finding: FindingType) {
        self.0 &= !(1 << finding.index() as u16);
    }

    /// True when no bit is set.
    pub fn is_unlabeled(self) -> bool {
        self.0 == 0
    }

    /// Number of set bits.
    pub fn count(self) -> u32 {
        self.0.count_ones()
    }

    /// Set findings in index order.
    pub fn findings(self) -> Vec<FindingType> {
        FindingType::ALL
            .iter()
            .copied()
            .filter(|f| self.get(*f))
            .collect()
    }

    /// Dense 0/1 vector of length 14.
    pub fn to_dense(self) -> [u8; FINDING_COUNT] {
        let mut out = [0u8; FINDING_COUNT];
        for (i, slot) in out.iter_mut().enumerate() {
            if self.0 & (1 << i as u16) != 0 {
                *slot = 1;
            }
        }
        out
    }

    /// Number of set bits shared with `other`.
    pub fn dot(self, other: FindingLabel) -> u32 {
        (self.0 & other.0).count_ones()
    }

    /// Checks the exclusivity rule: No Finding implies nothing else.
    pub fn validate(self) -> Result<()> {
        if self.get(FindingType::NoFinding) && self.count() > 1 {
            let other = self
                .findings()
                .into_iter()
                .find(|f| *f != FindingType::NoFinding)
                .expect("count > 1 guarantees another bit");
            return Err(Error::ExclusivityViolation(other));
        }
        Ok(())
    }
}

impl fmt::Display for FindingLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_unlabeled() {
            return f.write_str("(unlabeled)");
        }
        let names: Vec<&str> = self.findings().iter().map(|x| x.canonical_name()).collect();
        f.write_str(&names.join("|"))
    }
}

impl Serialize for FindingLabel {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let dense = self.to_dense();
        let mut seq = serializer.serialize_seq(Some(FINDING_COUNT))?;
        for v in dense {
            seq.serialize_element(&v)?;
        }
        seq.end()
    }
}

impl<'de> Deserialize<'de> for FindingLabel {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        struct DenseVisitor;
        impl<'de> Visitor<'de> for DenseVisitor {
            type Value = FindingLabel;

            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, "an array of {FINDING_COUNT} 0/1 integers")
            }

            fn visit_seq<A: SeqAccess<'de>>(
                self,
                mut seq: A,
            ) -> std::result::Result<FindingLabel, A::Error> {
                let mut dense = Vec::with_capacity(FINDING_COUNT);
                while let Some(v) = seq.next_element::<u8>()? {
                    dense.push(v);
                }
                FindingLabel::from_dense(&dense).map_err(de::Error::custom)
            }
        }
        deserializer.deserialize_seq(DenseVisitor)
    }
}
