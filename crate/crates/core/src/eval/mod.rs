//! Metrics, mention subsets, significance testing and confidence.

mod report;

use serde::{Deserialize, Serialize};

pub use report::{Comparison, EvalReport, ReportEntry, Summary};

use crate::data::PatientRecord;
use crate::error::{Error, Result};
use crate::model::DistVec;

/// Area under the precision-recall step curve. Equal scores form one
/// threshold step.
pub fn average_precision(scores: &[f64], labels: &[bool]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::LengthMismatch {
            left: scores.len(),
            right: labels.len(),
        });
    }
    let positives = labels.iter().filter(|&&y| y).count();
    if positives == 0 || positives == labels.len() {
        return Err(Error::SingleClassLabels);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let (mut seen, mut tp, mut ap) = (0usize, 0usize, 0.0);
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        let mut group_tp = 0;
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            group_tp += usize::from(labels[order[j]]);
            j += 1;
        }
        seen += j - i;
        tp += group_tp;
        if group_tp > 0 {
            ap += (group_tp as f64 / positives as f64) * (tp as f64 / seen as f64);
        }
        i = j;
    }
    Ok(ap)
}

/// Average precision for a symptom: the positive-class probability for
/// binary symptoms, the mean one-vs-rest AP over classes otherwise. Classes
/// that are absent (or universal) in `labels` are left out of the mean.
pub fn symptom_average_precision(probs: &[DistVec], labels: &[usize]) -> Result<f64> {
    if probs.len() != labels.len() {
        return Err(Error::LengthMismatch {
            left: probs.len(),
            right: labels.len(),
        });
    }
    let card = probs.first().map_or(2, DistVec::card);
    if card == 2 {
        let scores: Vec<f64> = probs.iter().map(|p| p.probs[1]).collect();
        let y: Vec<bool> = labels.iter().map(|&l| l == 1).collect();
        return average_precision(&scores, &y);
    }
    let mut per_class = Vec::new();
    for c in 0..card {
        let scores: Vec<f64> = probs.iter().map(|p| p.probs[c]).collect();
        let y: Vec<bool> = labels.iter().map(|&l| l == c).collect();
        match average_precision(&scores, &y) {
            Ok(ap) => per_class.push(ap),
            Err(Error::SingleClassLabels) => {}
            Err(e) => return Err(e),
        }
    }
    if per_class.is_empty() {
        return Err(Error::SingleClassLabels);
    }
    Ok(per_class.iter().sum::<f64>() / per_class.len() as f64)
}

fn brier_one(p: &DistVec, label: usize) -> f64 {
    if p.card() == 2 {
        let y = if label == 1 { 1.0 } else { 0.0 };
        (p.probs[1] - y).powi(2)
    } else {
        p.probs
            .iter()
            .enumerate()
            .map(|(c, q)| (q - if c == label { 1.0 } else { 0.0 }).powi(2))
            .sum()
    }
}

/// Mean squared error of the probability vector against the one-hot label.
/// Binary symptoms use the single positive-class probability, so the score
/// lies in `[0, 1]`; larger domains sum over classes and lie in `[0, 2]`.
pub fn brier(probs: &[DistVec], labels: &[usize]) -> Result<f64> {
    if probs.len() != labels.len() {
        return Err(Error::LengthMismatch {
            left: probs.len(),
            right: labels.len(),
        });
    }
    if probs.is_empty() {
        return Err(Error::EmptyData);
    }
    Ok(probs
        .iter()
        .zip(labels)
        .map(|(p, &l)| brier_one(p, l))
        .sum::<f64>()
        / probs.len() as f64)
}

/// `1 - H(p) / ln K`.
pub fn confidence(p: &DistVec) -> f64 {
    let k = p.card();
    if k < 2 {
        return 1.0;
    }
    let h: f64 = p
        .probs
        .iter()
        .filter(|&&q| q > 0.0)
        .map(|q| -q * q.ln())
        .sum();
    (1.0 - h / (k as f64).ln()).clamp(0.0, 1.0)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Subset {
    PresentMentioned,
    PresentUnmentioned,
    AbsentMentioned,
    AbsentUnmentioned,
}

impl Subset {
    pub const ALL: [Subset; 4] = [
        Subset::PresentMentioned,
        Subset::PresentUnmentioned,
        Subset::AbsentMentioned,
        Subset::AbsentUnmentioned,
    ];

    pub fn of(present: bool, mentioned: bool) -> Subset {
        match (present, mentioned) {
            (true, true) => Subset::PresentMentioned,
            (true, false) => Subset::PresentUnmentioned,
            (false, true) => Subset::AbsentMentioned,
            (false, false) => Subset::AbsentUnmentioned,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Subset::PresentMentioned => "present-mentioned",
            Subset::PresentUnmentioned => "present-unmentioned",
            Subset::AbsentMentioned => "absent-mentioned",
            Subset::AbsentUnmentioned => "absent-unmentioned",
        }
    }
}

/// Record indices per subset, in `Subset::ALL` order. Any nonzero symptom
/// value counts as present.
pub fn subset_split(records: &[PatientRecord], symptom: &str) -> Result<[Vec<usize>; 4]> {
    let mut out: [Vec<usize>; 4] = Default::default();
    for (i, r) in records.iter().enumerate() {
        let mentioned = r.mentioned(symptom).ok_or_else(|| {
            Error::MissingMentionsLabels(format!("record `{}`, symptom `{symptom}`", r.id))
        })?;
        let present = r.symptom(symptom).ok_or_else(|| {
            Error::Format(format!("record `{}` has no label for `{symptom}`", r.id))
        })? > 0;
        out[Subset::of(present, mentioned) as usize].push(i);
    }
    Ok(out)
}

/// Midranks of `|d|`, doubled so that they are integers.
fn doubled_ranks(abs: &[f64]) -> Vec<u64> {
    let mut order: Vec<usize> = (0..abs.len()).collect();
    order.sort_by(|&a, &b| abs[a].total_cmp(&abs[b]));
    let mut ranks = vec![0; abs.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j < order.len() && abs[order[j]] == abs[order[i]] {
            j += 1;
        }
        // positions i+1..=j share rank (i+1+j)/2
        for &k in &order[i..j] {
            ranks[k] = (i + 1 + j) as u64;
        }
        i = j;
    }
    ranks
}

const EXACT_LIMIT: usize = 25;

/// One-sided Wilcoxon signed-rank test of `a > b` on paired values. Zero
/// differences are dropped and ties get midranks. The null distribution is
/// exact up to 25 nonzero pairs and normal (tie-corrected, continuity
/// corrected) beyond.
pub fn wilcoxon_one_sided(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    let d: Vec<f64> = a
        .iter()
        .zip(b)
        .map(|(x, y)| x - y)
        .filter(|d| *d != 0.0)
        .collect();
    if d.is_empty() {
        return Err(Error::AllZeroDifferences);
    }
    let abs: Vec<f64> = d.iter().map(|x| x.abs()).collect();
    let ranks = doubled_ranks(&abs);
    let observed: u64 = ranks
        .iter()
        .zip(&d)
        .filter(|(_, d)| **d > 0.0)
        .map(|(r, _)| r)
        .sum();
    let n = d.len();
    if n <= EXACT_LIMIT {
        let total: u64 = ranks.iter().sum();
        let mut counts = vec![0f64; total as usize + 1];
        counts[0] = 1.0;
        for &r in &ranks {
            for s in (r as usize..counts.len()).rev() {
                counts[s] += counts[s - r as usize];
            }
        }
        let tail: f64 = counts[observed as usize..].iter().sum();
        return Ok(tail / 2f64.powi(n as i32));
    }
    let w = observed as f64 / 2.0;
    let nf = n as f64;
    let mean = nf * (nf + 1.0) / 4.0;
    let mut ties = 0.0;
    let mut sorted = abs.clone();
    sorted.sort_by(f64::total_cmp);
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i;
        while j < sorted.len() && sorted[j] == sorted[i] {
            j += 1;
        }
        let t = (j - i) as f64;
        ties += t * t * t - t;
        i = j;
    }
    let var = nf * (nf + 1.0) * (2.0 * nf + 1.0) / 24.0 - ties / 48.0;
    let z = (w - mean - 0.5) / var.sqrt();
    Ok(normal_sf(z).clamp(f64::MIN_POSITIVE, 1.0))
}

/// Upper tail of the standard normal.
fn normal_sf(z: f64) -> f64 {
    0.5 * statrs::function::erf::erfc(z / std::f64::consts::SQRT_2)
}
