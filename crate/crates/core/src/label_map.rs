//! Collapse 14-observation CheXpert rows into the five-class schema.
//!
//! | observation                | location    |
//! |----------------------------|-------------|
//! | Enlarged Cardiomediastinum | cardio      |
//! | Cardiomegaly               | cardio      |
//! | Lung Lesion, Lung Opacity, Edema, Consolidation, Pneumonia, Atelectasis | parenchyma |
//! | Pneumothorax, Pleural Effusion, Pleural Other | pleura |
//! | Fracture                   | chest wall  |
//! | Support Devices            | (none)      |
//! | No Finding                 | (none)      |
//!
//! Every positive observation except No Finding also sets `abnormal`.
//! Labels are the OR over all positive observations.

use std::collections::HashMap;
use std::fmt;
use std::io::{Read, Write};

use crate::label_file::{write_label_csv, LabelFileError, LabelRow};
use crate::labels::{Flags, LabelClass, LabelSource};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Observation {
    NoFinding,
    EnlargedCardiomediastinum,
    Cardiomegaly,
    LungLesion,
    LungOpacity,
    Edema,
    Consolidation,
    Pneumonia,
    Atelectasis,
    Pneumothorax,
    PleuralEffusion,
    PleuralOther,
    Fracture,
    SupportDevices,
}

impl Observation {
    pub const ALL: [Observation; 14] = [
        Observation::NoFinding,
        Observation::EnlargedCardiomediastinum,
        Observation::Cardiomegaly,
        Observation::LungLesion,
        Observation::LungOpacity,
        Observation::Edema,
        Observation::Consolidation,
        Observation::Pneumonia,
        Observation::Atelectasis,
        Observation::Pneumothorax,
        Observation::PleuralEffusion,
        Observation::PleuralOther,
        Observation::Fracture,
        Observation::SupportDevices,
    ];

    /// Column name in CheXpert CSVs.
    pub fn name(self) -> &'static str {
        match self {
            Observation::NoFinding => "No Finding",
            Observation::EnlargedCardiomediastinum => "Enlarged Cardiomediastinum",
            Observation::Cardiomegaly => "Cardiomegaly",
            Observation::LungLesion => "Lung Lesion",
            Observation::LungOpacity => "Lung Opacity",
            Observation::Edema => "Edema",
            Observation::Consolidation => "Consolidation",
            Observation::Pneumonia => "Pneumonia",
            Observation::Atelectasis => "Atelectasis",
            Observation::Pneumothorax => "Pneumothorax",
            Observation::PleuralEffusion => "Pleural Effusion",
            Observation::PleuralOther => "Pleural Other",
            Observation::Fracture => "Fracture",
            Observation::SupportDevices => "Support Devices",
        }
    }

    pub fn from_name(name: &str) -> Option<Observation> {
        Observation::ALL.into_iter().find(|o| o.name() == name)
    }

    /// The location this observation maps to, if any.
    pub fn location(self) -> Option<LabelClass> {
        use Observation::*;
        match self {
            EnlargedCardiomediastinum | Cardiomegaly => Some(LabelClass::Cardio),
            LungLesion | LungOpacity | Edema | Consolidation | Pneumonia | Atelectasis => {
                Some(LabelClass::Parenchyma)
            }
            Pneumothorax | PleuralEffusion | PleuralOther => Some(LabelClass::Pleura),
            Fracture => Some(LabelClass::ChestWall),
            SupportDevices | NoFinding => None,
        }
    }

    pub fn implies_abnormal(self) -> bool {
        self != Observation::NoFinding
    }
}

impl fmt::Display for Observation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ObservationValue {
    Positive,
    Negative,
    Uncertain,
    Blank,
}

impl ObservationValue {
    /// Parse a CheXpert cell: `1.0`, `0.0`, `-1.0` or empty.
    pub fn parse(cell: &str) -> Option<ObservationValue> {
        let cell = cell.trim();
        if cell.is_empty() {
            return Some(ObservationValue::Blank);
        }
        match cell.parse::<f64>().ok()? {
            1.0 => Some(ObservationValue::Positive),
            0.0 => Some(ObservationValue::Negative),
            -1.0 => Some(ObservationValue::Uncertain),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum UncertainPolicy {
    #[default]
    AsNegative,
    AsPositive,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChexpertRow {
    pub identifier: String,
    pub observations: HashMap<String, ObservationValue>,
}

#[derive(Debug, thiserror::Error)]
pub enum MapError {
    #[error("unknown observation `{0}`")]
    UnknownObservation(String),
    #[error("missing observation `{0}`")]
    MissingObservation(&'static str),
    #[error("line 1: header is missing column `{0}`")]
    HeaderMismatch(&'static str),
    #[error("row {row}, column `{column}`: bad value `{value}`")]
    BadValue { row: u64, column: String, value: String },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Output(#[from] LabelFileError),
}

/// Map one row. Blank cells count as negative; uncertain cells follow
/// `policy`.
pub fn map_row(row: &ChexpertRow, policy: UncertainPolicy) -> Result<Flags, MapError> {
    if let Some(name) = row.observations.keys().find(|k| Observation::from_name(k).is_none()) {
        return Err(MapError::UnknownObservation(name.clone()));
    }
    let mut values = Vec::with_capacity(14);
    for obs in Observation::ALL {
        let v = row
            .observations
            .get(obs.name())
            .ok_or(MapError::MissingObservation(obs.name()))?;
        values.push((obs, *v));
    }
    Ok(map_values(&values, policy))
}

fn is_positive(value: ObservationValue, policy: UncertainPolicy) -> bool {
    match value {
        ObservationValue::Positive => true,
        ObservationValue::Uncertain => policy == UncertainPolicy::AsPositive,
        ObservationValue::Negative | ObservationValue::Blank => false,
    }
}

fn map_values(values: &[(Observation, ObservationValue)], policy: UncertainPolicy) -> Flags {
    let mut flags = Flags::NORMAL;
    for &(obs, value) in values {
        if !is_positive(value, policy) {
            continue;
        }
        if let Some(loc) = obs.location() {
            flags.set(loc, true);
        }
        if obs.implies_abnormal() {
            flags.set(LabelClass::Abnormal, true);
        }
    }
    flags
}

/// A row where No Finding is positive alongside another positive finding.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MapWarning {
    pub row: u64,
    pub identifier: String,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct MapSummary {
    pub rows: usize,
    pub warnings: Vec<MapWarning>,
}

/// Stream a CheXpert CSV into the label CSV format (source `mapped`).
///
/// Columns are looked up by name; the identifier is taken from `study_uid`,
/// else `Path`, else the first column.
pub fn map_file<R: Read, W: Write>(
    input: R,
    output: W,
    policy: UncertainPolicy,
) -> Result<MapSummary, MapError> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
    let header = reader.headers()?.clone();
    let mut columns = Vec::with_capacity(14);
    for obs in Observation::ALL {
        let idx = header
            .iter()
            .position(|h| h.trim() == obs.name())
            .ok_or(MapError::HeaderMismatch(obs.name()))?;
        columns.push((obs, idx));
    }
    let id_col = header
        .iter()
        .position(|h| h.trim() == "study_uid")
        .or_else(|| header.iter().position(|h| h.trim() == "Path"))
        .unwrap_or(0);

    let mut summary = MapSummary::default();
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let mut values = Vec::with_capacity(14);
        for &(obs, idx) in &columns {
            let cell = record.get(idx).unwrap_or("");
            let v = ObservationValue::parse(cell).ok_or_else(|| MapError::BadValue {
                row: line,
                column: obs.name().to_owned(),
                value: cell.to_owned(),
            })?;
            values.push((obs, v));
        }
        let identifier = record.get(id_col).unwrap_or("").to_owned();
        let flags = map_values(&values, policy);
        let no_finding = values
            .iter()
            .any(|&(o, v)| o == Observation::NoFinding && is_positive(v, policy));
        if no_finding && flags.get(LabelClass::Abnormal) {
            summary.warnings.push(MapWarning {
                row: line,
                identifier: identifier.clone(),
                message: "No Finding is positive together with another finding".into(),
            });
        }
        rows.push(LabelRow {
            study_uid: identifier,
            flags,
            source: LabelSource::Mapped,
        });
    }
    summary.rows = rows.len();
    write_label_csv(output, &rows)?;
    Ok(summary)
}
