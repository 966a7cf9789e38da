//! The five-class label schema shared by every stage.
//!
//! A study is labeled by four anatomical locations (chest wall, pleura,
//! parenchyma, cardio) plus a fifth `abnormal` flag that must be set whenever
//! any location is positive. Labels are strictly binary.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// One of the five output classes, in canonical column order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelClass {
    ChestWall,
    Pleura,
    Parenchyma,
    Cardio,
    Abnormal,
}

impl LabelClass {
    pub const ALL: [LabelClass; 5] = [
        LabelClass::ChestWall,
        LabelClass::Pleura,
        LabelClass::Parenchyma,
        LabelClass::Cardio,
        LabelClass::Abnormal,
    ];

    /// The four anatomical locations, excluding `Abnormal`.
    pub const LOCATIONS: [LabelClass; 4] = [
        LabelClass::ChestWall,
        LabelClass::Pleura,
        LabelClass::Parenchyma,
        LabelClass::Cardio,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            LabelClass::ChestWall => "chest_wall",
            LabelClass::Pleura => "pleura",
            LabelClass::Parenchyma => "parenchyma",
            LabelClass::Cardio => "cardio",
            LabelClass::Abnormal => "abnormal",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn is_location(self) -> bool {
        self != LabelClass::Abnormal
    }
}

impl fmt::Display for LabelClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown label class `{0}`")]
pub struct UnknownClass(pub String);

impl FromStr for LabelClass {
    type Err = UnknownClass;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        LabelClass::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| UnknownClass(s.to_owned()))
    }
}

/// Where a label vector came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelSource {
    /// A normality template matched; all labels are zero.
    #[serde(rename = "template")]
    TemplateNormal,
    Keyword,
    Manual,
    /// Collapsed from a 14-observation CheXpert row.
    Mapped,
}

impl LabelSource {
    pub fn as_str(self) -> &'static str {
        match self {
            LabelSource::TemplateNormal => "template",
            LabelSource::Keyword => "keyword",
            LabelSource::Manual => "manual",
            LabelSource::Mapped => "mapped",
        }
    }
}

impl fmt::Display for LabelSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for LabelSource {
    type Err = UnknownClass;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "template" => Ok(LabelSource::TemplateNormal),
            "keyword" => Ok(LabelSource::Keyword),
            "manual" => Ok(LabelSource::Manual),
            "mapped" => Ok(LabelSource::Mapped),
            other => Err(UnknownClass(other.to_owned())),
        }
    }
}

/// Which keyword set produced a hit. `Other` covers abnormalities that do not
/// belong to any of the four locations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvidenceClass {
    ChestWall,
    Pleura,
    Parenchyma,
    Cardio,
    Other,
}

impl EvidenceClass {
    pub fn label_class(self) -> LabelClass {
        match self {
            EvidenceClass::ChestWall => LabelClass::ChestWall,
            EvidenceClass::Pleura => LabelClass::Pleura,
            EvidenceClass::Parenchyma => LabelClass::Parenchyma,
            EvidenceClass::Cardio => LabelClass::Cardio,
            EvidenceClass::Other => LabelClass::Abnormal,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Evidence {
    pub class: EvidenceClass,
    pub keyword: String,
}

/// Five binary flags in canonical order.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Flags(pub [bool; 5]);

impl Flags {
    pub const NORMAL: Flags = Flags([false; 5]);

    pub fn from_bits(bits: [u8; 5]) -> Flags {
        Flags(bits.map(|b| b != 0))
    }

    pub fn get(&self, class: LabelClass) -> bool {
        self.0[class.index()]
    }

    pub fn set(&mut self, class: LabelClass, value: bool) {
        self.0[class.index()] = value;
    }

    pub fn bits(&self) -> [u8; 5] {
        self.0.map(u8::from)
    }

    pub fn any_location(&self) -> bool {
        LabelClass::LOCATIONS.iter().any(|&c| self.get(c))
    }

    /// `abnormal` must be set whenever a location is set.
    pub fn is_consistent(&self) -> bool {
        !self.any_location() || self.get(LabelClass::Abnormal)
    }
}

/// Labels for one study plus where they came from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelVector {
    #[serde(with = "bit")]
    pub chest_wall: bool,
    #[serde(with = "bit")]
    pub pleura: bool,
    #[serde(with = "bit")]
    pub parenchyma: bool,
    #[serde(with = "bit")]
    pub cardio: bool,
    #[serde(with = "bit")]
    pub abnormal: bool,
    pub source: LabelSource,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub evidence: Vec<Evidence>,
}

impl LabelVector {
    pub fn new(flags: Flags, source: LabelSource) -> LabelVector {
        let [chest_wall, pleura, parenchyma, cardio, abnormal] = flags.0;
        LabelVector {
            chest_wall,
            pleura,
            parenchyma,
            cardio,
            abnormal,
            source,
            evidence: Vec::new(),
        }
    }

    pub fn normal() -> LabelVector {
        LabelVector::new(Flags::NORMAL, LabelSource::TemplateNormal)
    }

    pub fn flags(&self) -> Flags {
        Flags([
            self.chest_wall,
            self.pleura,
            self.parenchyma,
            self.cardio,
            self.abnormal,
        ])
    }

    pub fn get(&self, class: LabelClass) -> bool {
        self.flags().get(class)
    }

    pub fn is_consistent(&self) -> bool {
        self.flags().is_consistent()
            && (self.source != LabelSource::TemplateNormal || self.flags() == Flags::NORMAL)
    }
}

/// Serialize booleans as the integers 0 and 1.
pub(crate) mod bit {
    use serde::{de, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(value: &bool, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u8(u8::from(*value))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<bool, D::Error> {
        match u8::deserialize(d)? {
            0 => Ok(false),
            1 => Ok(true),
            other => Err(de::Error::custom(format!("expected 0 or 1, got {other}"))),
        }
    }
}
