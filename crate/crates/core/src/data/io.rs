//! Reading and writing datasets.
//!
//! * tabular CSV: header of variable names (case-insensitive), optional `id`
//!   column, values given as domain labels. Symptom columns are optional but
//!   must be all present or all absent.
//! * mentions CSV: `id` then one `0`/`1` column per symptom.
//! * notes JSON lines: `{"id", "text"}`.
//! * spans JSON lines: `{"id", "symptom", "start", "end"}`, character offsets
//!   into the note text.
//! * channel CSV: `id` then one column per symptom value, named
//!   `symptom:value`, holding classifier probabilities.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{ChannelDraw, Note, PatientRecord, Span};
use crate::error::{Error, Result};
use crate::model::{DistVec, NetworkSpec};
use crate::text::EmbeddingMatrix;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DatasetPaths {
    pub tabular: PathBuf,
    #[serde(default)]
    pub embeddings: Option<PathBuf>,
    #[serde(default)]
    pub mentions: Option<PathBuf>,
    #[serde(default)]
    pub notes: Option<PathBuf>,
    #[serde(default)]
    pub spans: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub records: Vec<PatientRecord>,
    pub embeddings: Option<EmbeddingMatrix>,
}

#[derive(Serialize, Deserialize)]
struct NoteLine {
    id: String,
    text: String,
}

#[derive(Serialize, Deserialize)]
struct SpanLine {
    id: String,
    symptom: String,
    start: usize,
    end: usize,
}

pub fn load_dataset(net: &NetworkSpec, paths: &DatasetPaths) -> Result<Dataset> {
    let mut records = read_tabular_csv(net, &paths.tabular)?;
    let position: HashMap<String, usize> = records
        .iter()
        .enumerate()
        .map(|(i, r)| (r.id.clone(), i))
        .collect();
    let embeddings = match &paths.embeddings {
        Some(p) => {
            let m = EmbeddingMatrix::load(p)?;
            if m.len() != records.len() {
                return Err(Error::IdMisalignment(format!(
                    "{} records but {} embedding rows",
                    records.len(),
                    m.len()
                )));
            }
            for (row, id) in m.ids().iter().enumerate() {
                let i = *position.get(id).ok_or_else(|| {
                    Error::IdMisalignment(format!("embedding id `{id}` has no record"))
                })?;
                records[i].embedding_row = Some(row);
            }
            Some(m)
        }
        None => None,
    };
    if let Some(p) = &paths.mentions {
        let mentions = read_mentions_csv(net, p)?;
        if mentions.len() != records.len() {
            return Err(Error::IdMisalignment(format!(
                "{} records but {} mention rows",
                records.len(),
                mentions.len()
            )));
        }
        for (id, m) in mentions {
            let i = *position
                .get(&id)
                .ok_or_else(|| Error::IdMisalignment(format!("mention id `{id}` has no record")))?;
            records[i].mentions = Some(m);
        }
    }
    if let Some(p) = &paths.notes {
        for (id, text) in read_notes_jsonl(p)? {
            let i = *position
                .get(&id)
                .ok_or_else(|| Error::IdMisalignment(format!("note id `{id}` has no record")))?;
            records[i].note = Some(Note {
                text,
                spans: Vec::new(),
            });
        }
    }
    if let Some(p) = &paths.spans {
        for (id, span) in read_spans_jsonl(p)? {
            let i = *position
                .get(&id)
                .ok_or_else(|| Error::IdMisalignment(format!("span id `{id}` has no record")))?;
            net.variable(&span.symptom)?;
            let note = records[i]
                .note
                .as_mut()
                .ok_or_else(|| Error::MissingSpans(format!("span for `{id}` but no note text")))?;
            let len = note.text.chars().count();
            if span.start > span.end || span.end > len {
                return Err(Error::Format(format!(
                    "span {}..{} outside note `{id}` of length {len}",
                    span.start, span.end
                )));
            }
            note.spans.push(span);
        }
    }
    Ok(Dataset {
        records,
        embeddings,
    })
}

fn header_index(headers: &csv::StringRecord) -> HashMap<String, usize> {
    headers
        .iter()
        .enumerate()
        .map(|(i, h)| (h.trim().to_lowercase(), i))
        .collect()
}

pub fn read_tabular_csv(net: &NetworkSpec, path: &Path) -> Result<Vec<PatientRecord>> {
    let mut reader = csv::Reader::from_path(path)?;
    let index = header_index(reader.headers()?);
    let lookup = |name: &str| index.get(&name.to_lowercase()).copied();
    let tabular = net.tabular();
    let missing: Vec<&str> = tabular
        .iter()
        .filter(|v| lookup(&v.name).is_none())
        .map(|v| v.name.as_str())
        .collect();
    if !missing.is_empty() {
        return Err(Error::HeaderMismatch(format!(
            "missing columns {missing:?}"
        )));
    }
    let symptoms = net.symptoms();
    let present = symptoms
        .iter()
        .filter(|s| lookup(&s.name).is_some())
        .count();
    if present != 0 && present != symptoms.len() {
        return Err(Error::HeaderMismatch(
            "symptom columns must be all present or all absent".into(),
        ));
    }
    let id_col = lookup("id");
    let mut records = Vec::new();
    for (row, rec) in reader.records().enumerate() {
        let rec = rec?;
        let id = match id_col {
            Some(c) => rec.get(c).unwrap_or_default().trim().to_string(),
            None => row.to_string(),
        };
        let parse = |name: &str, domain_owner: &crate::model::VariableSpec| -> Result<usize> {
            let raw = rec
                .get(lookup(name).expect("checked"))
                .unwrap_or_default()
                .trim();
            domain_owner
                .index_of(raw)
                .ok_or_else(|| Error::OutOfDomainValue {
                    row,
                    variable: name.to_string(),
                    value: raw.to_string(),
                })
        };
        let mut values = BTreeMap::new();
        for v in &tabular {
            values.insert(v.name.clone(), parse(&v.name, v)?);
        }
        let mut record = PatientRecord::new(id, values);
        if present > 0 {
            let mut labels = BTreeMap::new();
            for s in &symptoms {
                labels.insert(s.name.clone(), parse(&s.name, s)?);
            }
            record.symptoms = Some(labels);
        }
        records.push(record);
    }
    let mut seen = std::collections::HashSet::new();
    if let Some(dup) = records.iter().find(|r| !seen.insert(r.id.clone())) {
        return Err(Error::IdMisalignment(format!("duplicate id `{}`", dup.id)));
    }
    Ok(records)
}

pub fn write_tabular_csv(net: &NetworkSpec, records: &[PatientRecord], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let with_symptoms = records.iter().all(|r| r.symptoms.is_some()) && !records.is_empty();
    let columns: Vec<_> = net
        .variables
        .iter()
        .filter(|v| with_symptoms || v.role != crate::model::Role::Symptom)
        .collect();
    let mut header = vec!["id".to_string()];
    header.extend(columns.iter().map(|v| v.name.clone()));
    w.write_record(&header)?;
    for r in records {
        let mut row = vec![r.id.clone()];
        for v in &columns {
            let value = r.value(&v.name).ok_or_else(|| {
                Error::Format(format!("record `{}` has no value for `{}`", r.id, v.name))
            })?;
            row.push(v.domain[value].clone());
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_mentions_csv(
    net: &NetworkSpec,
    path: &Path,
) -> Result<Vec<(String, BTreeMap<String, bool>)>> {
    let mut reader = csv::Reader::from_path(path)?;
    let index = header_index(reader.headers()?);
    let id_col = *index
        .get("id")
        .ok_or_else(|| Error::HeaderMismatch("mentions file has no `id` column".into()))?;
    let symptoms = net.symptom_names();
    let cols: Vec<(String, usize)> = symptoms
        .iter()
        .map(|s| {
            index
                .get(&s.to_lowercase())
                .map(|&c| (s.clone(), c))
                .ok_or_else(|| Error::HeaderMismatch(format!("mentions file has no `{s}` column")))
        })
        .collect::<Result<_>>()?;
    let mut out = Vec::new();
    for (row, rec) in reader.records().enumerate() {
        let rec = rec?;
        let mut m = BTreeMap::new();
        for (s, c) in &cols {
            let raw = rec.get(*c).unwrap_or_default().trim();
            let v = match raw {
                "1" => true,
                "0" => false,
                _ => {
                    return Err(Error::OutOfDomainValue {
                        row,
                        variable: s.clone(),
                        value: raw.to_string(),
                    })
                }
            };
            m.insert(s.clone(), v);
        }
        out.push((rec.get(id_col).unwrap_or_default().trim().to_string(), m));
    }
    Ok(out)
}

pub fn write_mentions_csv(net: &NetworkSpec, records: &[PatientRecord], path: &Path) -> Result<()> {
    let symptoms = net.symptom_names();
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["id".to_string()];
    header.extend(symptoms.iter().cloned());
    w.write_record(&header)?;
    for r in records {
        let mut row = vec![r.id.clone()];
        for s in &symptoms {
            let m = r.mentioned(s).ok_or_else(|| {
                Error::MissingMentionsLabels(format!("record `{}`, symptom `{s}`", r.id))
            })?;
            row.push(if m { "1" } else { "0" }.to_string());
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let reader = BufReader::new(fs::File::open(path)?);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(
            serde_json::from_str(&line)
                .map_err(|e| Error::Format(format!("{} line {}: {e}", path.display(), i + 1)))?,
        );
    }
    Ok(out)
}

fn write_jsonl<T: Serialize>(items: impl IntoIterator<Item = T>, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    for item in items {
        serde_json::to_writer(&mut w, &item)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_notes_jsonl(path: &Path) -> Result<Vec<(String, String)>> {
    Ok(read_jsonl::<NoteLine>(path)?
        .into_iter()
        .map(|n| (n.id, n.text))
        .collect())
}

/// One `{"id", "text"}` line per record that has a note.
pub fn write_notes_jsonl(records: &[PatientRecord], path: &Path) -> Result<()> {
    write_jsonl(
        records.iter().filter_map(|r| {
            r.note.as_ref().map(|n| NoteLine {
                id: r.id.clone(),
                text: n.text.clone(),
            })
        }),
        path,
    )
}

pub fn read_spans_jsonl(path: &Path) -> Result<Vec<(String, Span)>> {
    Ok(read_jsonl::<SpanLine>(path)?
        .into_iter()
        .map(|s| {
            (
                s.id,
                Span {
                    symptom: s.symptom,
                    start: s.start,
                    end: s.end,
                },
            )
        })
        .collect())
}

pub fn write_spans_jsonl(records: &[PatientRecord], path: &Path) -> Result<()> {
    write_jsonl(
        records.iter().flat_map(|r| {
            r.note.iter().flat_map(move |n| {
                n.spans.iter().map(move |s| SpanLine {
                    id: r.id.clone(),
                    symptom: s.symptom.clone(),
                    start: s.start,
                    end: s.end,
                })
            })
        }),
        path,
    )
}

pub fn write_channel_csv(
    net: &NetworkSpec,
    ids: &[String],
    draw: &ChannelDraw,
    path: &Path,
) -> Result<()> {
    let symptoms = net.symptoms();
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["id".to_string()];
    for s in &symptoms {
        header.extend(s.domain.iter().map(|v| format!("{}:{v}", s.name)));
    }
    w.write_record(&header)?;
    for (i, id) in ids.iter().enumerate() {
        let mut row = vec![id.clone()];
        for s in &symptoms {
            let probs = draw
                .probs
                .get(&s.name)
                .and_then(|p| p.get(i))
                .ok_or_else(|| {
                    Error::IdMisalignment(format!("no channel probabilities for `{id}`"))
                })?;
            row.extend(probs.probs.iter().map(|p| format!("{p:?}")));
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Probabilities per symptom and id from a channel CSV.
pub fn read_channel_csv(
    net: &NetworkSpec,
    path: &Path,
) -> Result<BTreeMap<String, BTreeMap<String, DistVec>>> {
    let mut reader = csv::Reader::from_path(path)?;
    let index = header_index(reader.headers()?);
    let id_col = *index
        .get("id")
        .ok_or_else(|| Error::HeaderMismatch("channel file has no `id` column".into()))?;
    let mut cols = Vec::new();
    for s in net.symptoms() {
        let c: Vec<usize> = s
            .domain
            .iter()
            .map(|v| {
                index
                    .get(&format!("{}:{v}", s.name).to_lowercase())
                    .copied()
                    .ok_or_else(|| {
                        Error::HeaderMismatch(format!(
                            "channel file has no `{}:{v}` column",
                            s.name
                        ))
                    })
            })
            .collect::<Result<_>>()?;
        cols.push((s.name.clone(), c));
    }
    let mut out: BTreeMap<String, BTreeMap<String, DistVec>> = BTreeMap::new();
    for rec in reader.records() {
        let rec = rec?;
        let id = rec.get(id_col).unwrap_or_default().trim().to_string();
        for (s, c) in &cols {
            let probs = c
                .iter()
                .map(|&j| {
                    rec.get(j)
                        .unwrap_or_default()
                        .trim()
                        .parse::<f64>()
                        .map_err(|e| Error::Format(format!("channel value for `{id}`: {e}")))
                })
                .collect::<Result<Vec<_>>>()?;
            out.entry(s.clone())
                .or_default()
                .insert(id.clone(), DistVec::new(s.clone(), probs)?);
        }
    }
    Ok(out)
}
