use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A symptom mention inside a note, as character offsets `[start, end)`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Span {
    pub symptom: String,
    pub start: usize,
    pub end: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Note {
    pub text: String,
    pub spans: Vec<Span>,
}

/// One patient: tabular values, optional symptom labels, and whatever text
/// side-information is available. Values are domain indices.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PatientRecord {
    pub id: String,
    pub tabular: BTreeMap<String, usize>,
    #[serde(default)]
    pub symptoms: Option<BTreeMap<String, usize>>,
    #[serde(default)]
    pub embedding_row: Option<usize>,
    #[serde(default)]
    pub note: Option<Note>,
    #[serde(default)]
    pub mentions: Option<BTreeMap<String, bool>>,
}

impl PatientRecord {
    pub fn new(id: impl Into<String>, tabular: BTreeMap<String, usize>) -> Self {
        PatientRecord {
            id: id.into(),
            tabular,
            symptoms: None,
            embedding_row: None,
            note: None,
            mentions: None,
        }
    }

    /// Value of a tabular variable or symptom label.
    pub fn value(&self, var: &str) -> Option<usize> {
        self.tabular
            .get(var)
            .or_else(|| self.symptoms.as_ref().and_then(|s| s.get(var)))
            .copied()
    }

    pub fn symptom(&self, var: &str) -> Option<usize> {
        self.symptoms.as_ref().and_then(|s| s.get(var)).copied()
    }

    pub fn mentioned(&self, var: &str) -> Option<bool> {
        self.mentions.as_ref().and_then(|m| m.get(var)).copied()
    }
}

/// Values of one variable across records; every record must carry it.
pub fn column(data: &[PatientRecord], var: &str) -> Result<Vec<usize>> {
    data.iter()
        .map(|r| {
            r.value(var)
                .ok_or_else(|| Error::Format(format!("record `{}` has no value for `{var}`", r.id)))
        })
        .collect()
}

/// Symptom labels of one variable; labels are required.
pub fn labels(data: &[PatientRecord], symptom: &str) -> Result<Vec<usize>> {
    data.iter()
        .map(|r| {
            r.symptom(symptom).ok_or_else(|| {
                Error::Format(format!("record `{}` has no label for `{symptom}`", r.id))
            })
        })
        .collect()
}
