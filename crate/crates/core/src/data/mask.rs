//! Removing symptom descriptions from notes by dropping whole sentences.
//!
//! Sentences end after `.`, `!` or `?` (plus any following whitespace) or
//! at a blank line. Each span is dropped independently with probability
//! `drop_prob`; the decision for span `j` of record `id` depends only on
//! `(seed, id, j)`. Dropping a span removes every sentence it overlaps.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::{Note, PatientRecord, Span};
use crate::error::{Error, Result};
use crate::seed::unit_draw;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DropLogEntry {
    pub id: String,
    pub span_index: usize,
    pub symptom: String,
    pub start: usize,
    pub end: usize,
    pub dropped: bool,
}

/// Sentence ranges `[start, end)` in characters, covering the whole text.
pub fn split_sentences(text: &str) -> Vec<(usize, usize)> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let mut start = 0;
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        let terminal = matches!(c, '.' | '!' | '?');
        let blank_line = c == '\n' && {
            let mut j = i + 1;
            while j < chars.len() && chars[j] != '\n' && chars[j].is_whitespace() {
                j += 1;
            }
            j < chars.len() && chars[j] == '\n'
        };
        if terminal || blank_line {
            let mut end = i + 1;
            while end < chars.len() && chars[end].is_whitespace() {
                end += 1;
            }
            out.push((start, end));
            start = end;
            i = end;
        } else {
            i += 1;
        }
    }
    if start < chars.len() {
        out.push((start, chars.len()));
    }
    out
}

fn mask_note(
    id: &str,
    note: &Note,
    drop_prob: f64,
    seed: u64,
    log: &mut Vec<DropLogEntry>,
) -> Note {
    let sentences = split_sentences(&note.text);
    let overlapping = |s: &Span| -> Vec<usize> {
        sentences
            .iter()
            .enumerate()
            .filter(|(_, (a, b))| {
                s.start < *b && (s.end > *a || (s.start == s.end && s.start == *a))
            })
            .map(|(k, _)| k)
            .collect()
    };
    let mut removed = BTreeSet::new();
    for (j, span) in note.spans.iter().enumerate() {
        let dropped = unit_draw(seed, id, j as u64) < drop_prob;
        if dropped {
            removed.extend(overlapping(span));
        }
        log.push(DropLogEntry {
            id: id.to_string(),
            span_index: j,
            symptom: span.symptom.clone(),
            start: span.start,
            end: span.end,
            dropped,
        });
    }
    if removed.is_empty() {
        return note.clone();
    }
    let chars: Vec<char> = note.text.chars().collect();
    let mut text = String::new();
    // shift[k] = characters removed before sentence k
    let mut shift = Vec::with_capacity(sentences.len());
    let mut cut = 0;
    for (k, &(a, b)) in sentences.iter().enumerate() {
        shift.push(cut);
        if removed.contains(&k) {
            cut += b - a;
        } else {
            text.extend(&chars[a..b]);
        }
    }
    let sentence_of = |pos: usize| {
        sentences
            .iter()
            .position(|&(a, b)| pos >= a && pos < b)
            .unwrap_or(sentences.len() - 1)
    };
    let spans = note
        .spans
        .iter()
        .filter(|s| overlapping(s).iter().all(|k| !removed.contains(k)))
        .map(|s| {
            let delta = shift[sentence_of(s.start)];
            Span {
                symptom: s.symptom.clone(),
                start: s.start - delta,
                end: s.end - delta,
            }
        })
        .collect();
    Note { text, spans }
}

/// Masked copies of `records` plus one log line per span. Tabular values and
/// labels are untouched; a mention flag turns false once every span of that
/// symptom has been removed.
pub fn mask_notes(
    records: &[PatientRecord],
    drop_prob: f64,
    seed: u64,
) -> Result<(Vec<PatientRecord>, Vec<DropLogEntry>)> {
    if !(0.0..=1.0).contains(&drop_prob) {
        return Err(Error::InvalidConfig(format!(
            "drop probability {drop_prob} outside [0, 1]"
        )));
    }
    let mut log = Vec::new();
    let mut out = Vec::with_capacity(records.len());
    for r in records {
        let note = r
            .note
            .as_ref()
            .ok_or_else(|| Error::MissingSpans(format!("record `{}` has no note", r.id)))?;
        let masked = mask_note(&r.id, note, drop_prob, seed, &mut log);
        let mut rec = r.clone();
        if let Some(mentions) = rec.mentions.as_mut() {
            for (symptom, flag) in mentions.iter_mut() {
                let had = note.spans.iter().any(|s| &s.symptom == symptom);
                let has = masked.spans.iter().any(|s| &s.symptom == symptom);
                if had && !has {
                    *flag = false;
                }
            }
        }
        rec.note = Some(masked);
        out.push(rec);
    }
    Ok((out, log))
}

pub fn write_drop_log(log: &[DropLogEntry], path: &std::path::Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for entry in log {
        w.serialize(entry)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use std::collections::BTreeMap;

    use super::*;

    fn span(symptom: &str, text: &str, phrase: &str) -> Span {
        let byte = text.find(phrase).unwrap();
        let start = text[..byte].chars().count();
        Span {
            symptom: symptom.into(),
            start,
            end: start + phrase.chars().count(),
        }
    }

    fn record() -> PatientRecord {
        let text = "Patient reports a dry cough. No fever today!\n\nBreathing is fine. Mild dyspnea on exertion?";
        let mut r = PatientRecord::new("r1", BTreeMap::from([("asthma".to_string(), 1)]));
        r.note = Some(Note {
            text: text.into(),
            spans: vec![
                span("cough", text, "dry cough"),
                span("fever", text, "No fever"),
                span("dyspnea", text, "Mild dyspnea"),
            ],
        });
        r.mentions = Some(BTreeMap::from([
            ("cough".to_string(), true),
            ("fever".to_string(), true),
            ("dyspnea".to_string(), true),
            ("pain".to_string(), false),
        ]));
        r
    }

    #[test]
    fn sentences() {
        let s = split_sentences("A b. C d!\n\nE f\n\nG? tail");
        let text: Vec<char> = "A b. C d!\n\nE f\n\nG? tail".chars().collect();
        let parts: Vec<String> = s
            .iter()
            .map(|&(a, b)| text[a..b].iter().collect())
            .collect();
        assert_eq!(parts, vec!["A b. ", "C d!\n\n", "E f\n\n", "G? ", "tail"]);
    }

    #[test]
    fn zero_probability_is_identity() {
        let r = record();
        let (out, log) = mask_notes(std::slice::from_ref(&r), 0.0, 1).unwrap();
        assert_eq!(out[0], r);
        assert_eq!(log.len(), 3);
    }

    #[test]
    fn full_probability_drops_every_span_sentence() {
        let r = record();
        let (out, _) = mask_notes(std::slice::from_ref(&r), 1.0, 1).unwrap();
        let note = out[0].note.as_ref().unwrap();
        assert_eq!(note.text, "Breathing is fine. ");
        assert!(note.spans.is_empty());
        assert_eq!(out[0].tabular, r.tabular);
        let m = out[0].mentions.as_ref().unwrap();
        assert!(!m["cough"] && !m["fever"] && !m["dyspnea"]);
    }

    #[test]
    fn kept_spans_are_reindexed() {
        let r = record();
        for seed in 0..50 {
            let (out, log) = mask_notes(std::slice::from_ref(&r), 0.5, seed).unwrap();
            let note = out[0].note.as_ref().unwrap();
            let chars: Vec<char> = note.text.chars().collect();
            for s in &note.spans {
                let original = r
                    .note
                    .as_ref()
                    .unwrap()
                    .spans
                    .iter()
                    .find(|o| o.symptom == s.symptom)
                    .unwrap();
                let before: String = r
                    .note
                    .as_ref()
                    .unwrap()
                    .text
                    .chars()
                    .skip(original.start)
                    .take(original.end - original.start)
                    .collect();
                let after: String = chars[s.start..s.end].iter().collect();
                assert_eq!(before, after);
            }
            let dropped = log.iter().filter(|e| e.dropped).count();
            assert_eq!(note.spans.len(), 3 - dropped);
        }
    }

    #[test]
    fn missing_note() {
        let r = PatientRecord::new("x", BTreeMap::new());
        assert!(matches!(
            mask_notes(&[r], 0.5, 0),
            Err(Error::MissingSpans(_))
        ));
    }
}
