//! Combining BN and text predictions: the consistency node and the model
//! variants built on it.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::inference::CompiledNetwork;
use crate::model::{DistVec, VariableSpec};

/// `P(C = c | B = b, T = t)` for one symptom, stored as `rows[b][t][c]`,
/// together with the unnormalized weights it was built from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyCpt {
    pub symptom: String,
    pub domain: Vec<String>,
    pub rows: Vec<Vec<Vec<f64>>>,
    pub weights: Vec<Vec<Vec<f64>>>,
}

/// Neumaier summation.
#[derive(Clone, Copy, Default)]
struct Compensated {
    sum: f64,
    carry: f64,
}

impl Compensated {
    fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.carry += (self.sum - t) + x;
        } else {
            self.carry += (x - t) + self.sum;
        }
        self.sum = t;
    }

    fn value(self) -> f64 {
        self.sum + self.carry
    }
}

impl ConsistencyCpt {
    /// Builds the normalized table from raw weights `w[b][t][c]`. A row whose
    /// weights are all zero becomes uniform.
    pub fn from_weights(symptom: &VariableSpec, weights: Vec<Vec<Vec<f64>>>) -> Result<Self> {
        let k = symptom.card();
        let shape_ok = weights.len() == k
            && weights
                .iter()
                .all(|r| r.len() == k && r.iter().all(|c| c.len() == k));
        if !shape_ok {
            return Err(Error::DimensionMismatch {
                expected: k,
                found: weights.len(),
            });
        }
        if weights
            .iter()
            .flatten()
            .flatten()
            .any(|w| !w.is_finite() || *w < 0.0)
        {
            return Err(Error::InvalidFactor(format!(
                "consistency weights for `{}` must be finite and nonnegative",
                symptom.name
            )));
        }
        let rows = weights
            .iter()
            .map(|by_t| {
                by_t.iter()
                    .map(|w| {
                        let total: f64 = w.iter().sum();
                        if total > 0.0 {
                            w.iter().map(|x| x / total).collect()
                        } else {
                            vec![1.0 / k as f64; k]
                        }
                    })
                    .collect()
            })
            .collect();
        Ok(ConsistencyCpt {
            symptom: symptom.name.clone(),
            domain: symptom.domain.clone(),
            rows,
            weights,
        })
    }

    pub fn card(&self) -> usize {
        self.domain.len()
    }

    pub fn row(&self, b: usize, t: usize) -> &[f64] {
        &self.rows[b][t]
    }
}

/// `W{c,b,t} = sum_k P(B_k = b) P(T_k = t) [s_k = c]`, then per-`(b, t)`
/// normalization over `c`.
pub fn estimate_consistency_cpt(
    symptom: &VariableSpec,
    bn_probs: &[DistVec],
    text_probs: &[DistVec],
    labels: &[usize],
) -> Result<ConsistencyCpt> {
    if bn_probs.len() != text_probs.len() {
        return Err(Error::LengthMismatch {
            left: bn_probs.len(),
            right: text_probs.len(),
        });
    }
    if bn_probs.len() != labels.len() {
        return Err(Error::LengthMismatch {
            left: bn_probs.len(),
            right: labels.len(),
        });
    }
    if labels.is_empty() {
        return Err(Error::EmptyData);
    }
    let k = symptom.card();
    let mut acc = vec![vec![vec![Compensated::default(); k]; k]; k];
    for ((bn, text), &c) in bn_probs.iter().zip(text_probs).zip(labels) {
        if bn.card() != k || text.card() != k {
            return Err(Error::DomainMismatch(format!(
                "`{}` has {k} values but got distributions of size {} and {}",
                symptom.name,
                bn.card(),
                text.card()
            )));
        }
        if c >= k {
            return Err(Error::UnknownValue {
                variable: symptom.name.clone(),
                value: c.to_string(),
            });
        }
        for (b, pb) in bn.probs.iter().enumerate() {
            for (t, pt) in text.probs.iter().enumerate() {
                acc[b][t][c].add(pb * pt);
            }
        }
    }
    let weights = acc
        .into_iter()
        .map(|by_t| {
            by_t.into_iter()
                .map(|w| w.into_iter().map(Compensated::value).collect())
                .collect()
        })
        .collect();
    ConsistencyCpt::from_weights(symptom, weights)
}

/// `P(C = c) = sum_b sum_t bn(b) text(t) cpt(c | b, t)`.
pub fn fuse(bn: &DistVec, text: &DistVec, cpt: &ConsistencyCpt) -> Result<DistVec> {
    let k = cpt.card();
    if bn.card() != k || text.card() != k {
        return Err(Error::DomainMismatch(format!(
            "consistency node for `{}` has {k} values but got distributions of size {} and {}",
            cpt.symptom,
            bn.card(),
            text.card()
        )));
    }
    let mut out = vec![0.0; k];
    for (b, pb) in bn.probs.iter().enumerate() {
        for (t, pt) in text.probs.iter().enumerate() {
            let w = pb * pt;
            for (o, r) in out.iter_mut().zip(cpt.row(b, t)) {
                *o += w * r;
            }
        }
    }
    DistVec::from_weights(cpt.symptom.clone(), out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    BnOnly,
    TextOnly,
    CBnText,
    VBnText,
    VCBnText,
    Concat,
}

impl Variant {
    pub const ALL: [Variant; 6] = [
        Variant::BnOnly,
        Variant::TextOnly,
        Variant::CBnText,
        Variant::VBnText,
        Variant::VCBnText,
        Variant::Concat,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::BnOnly => "bn-only",
            Variant::TextOnly => "text-only",
            Variant::CBnText => "c-bn-text",
            Variant::VBnText => "v-bn-text",
            Variant::VCBnText => "v-c-bn-text",
            Variant::Concat => "concat",
        }
    }

    pub fn needs_cpt(self) -> bool {
        matches!(self, Variant::CBnText | Variant::VCBnText)
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::InvalidConfig(format!("unknown variant `{s}`")))
    }
}

/// Per-patient predictions, keyed by variant and then symptom.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FusedPrediction {
    pub id: String,
    pub variants: BTreeMap<Variant, BTreeMap<String, DistVec>>,
}

fn virtual_evidence(text: &BTreeMap<String, DistVec>) -> BTreeMap<String, Vec<f64>> {
    text.iter()
        .map(|(s, d)| (s.clone(), d.probs.clone()))
        .collect()
}

/// `fuse` applied to every symptom in `bn`.
pub fn fuse_symptoms(
    bn: &BTreeMap<String, DistVec>,
    text: &BTreeMap<String, DistVec>,
    cpts: &BTreeMap<String, ConsistencyCpt>,
) -> Result<BTreeMap<String, DistVec>> {
    bn.iter()
        .map(|(s, b)| {
            let t = text
                .get(s)
                .ok_or_else(|| Error::UnknownVariable(s.clone()))?;
            let cpt = cpts.get(s).ok_or_else(|| Error::MissingCpt(s.clone()))?;
            Ok((s.clone(), fuse(b, t, cpt)?))
        })
        .collect()
}

/// Symptom predictions of one variant for one patient. `cpts` must have
/// been estimated against the matching BN side: BN-only probabilities for
/// `c-bn-text`, V-BN-text probabilities for `v-c-bn-text`. The concat
/// baseline has its own classifier and is not produced here.
pub fn run_variant(
    variant: Variant,
    net: &CompiledNetwork,
    tab: &BTreeMap<String, usize>,
    text: &BTreeMap<String, DistVec>,
    cpts: Option<&BTreeMap<String, ConsistencyCpt>>,
) -> Result<BTreeMap<String, DistVec>> {
    let cpts = || cpts.ok_or_else(|| Error::MissingCpt(variant.to_string()));
    match variant {
        Variant::BnOnly => net.symptom_posteriors(tab, None),
        Variant::TextOnly => Ok(text.clone()),
        Variant::VBnText => net.symptom_posteriors(tab, Some(&virtual_evidence(text))),
        Variant::CBnText => fuse_symptoms(&net.symptom_posteriors(tab, None)?, text, cpts()?),
        Variant::VCBnText => fuse_symptoms(
            &net.symptom_posteriors(tab, Some(&virtual_evidence(text)))?,
            text,
            cpts()?,
        ),
        Variant::Concat => Err(Error::InvalidConfig(
            "concat predictions come from the concat classifier".into(),
        )),
    }
}

/// Consistency tables for every symptom from training records. `text` holds
/// out-of-fold text probabilities per symptom, aligned with `tabs`. When
/// `with_virtual` is set the BN side is V-BN-text computed from those same
/// probabilities.
pub fn fit_consistency(
    net: &CompiledNetwork,
    symptoms: &[VariableSpec],
    tabs: &[BTreeMap<String, usize>],
    text: &BTreeMap<String, Vec<DistVec>>,
    labels: &BTreeMap<String, Vec<usize>>,
    with_virtual: bool,
) -> Result<BTreeMap<String, ConsistencyCpt>> {
    let mut bn: BTreeMap<String, Vec<DistVec>> = BTreeMap::new();
    for (i, tab) in tabs.iter().enumerate() {
        let posteriors = if with_virtual {
            let ve = text
                .iter()
                .map(|(s, probs)| (s.clone(), probs[i].probs.clone()))
                .collect();
            net.symptom_posteriors(tab, Some(&ve))?
        } else {
            net.symptom_posteriors(tab, None)?
        };
        for (s, d) in posteriors {
            bn.entry(s).or_default().push(d);
        }
    }
    symptoms
        .iter()
        .map(|s| {
            let t = text
                .get(&s.name)
                .ok_or_else(|| Error::UnknownVariable(s.name.clone()))?;
            let y = labels
                .get(&s.name)
                .ok_or_else(|| Error::UnknownVariable(s.name.clone()))?;
            let b = bn.get(&s.name).map(Vec::as_slice).unwrap_or_default();
            Ok((s.name.clone(), estimate_consistency_cpt(s, b, t, y)?))
        })
        .collect()
}
