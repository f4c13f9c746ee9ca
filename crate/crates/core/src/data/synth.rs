//! Ancestral sampling from a parameterized network, and a simulated note
//! channel that stands in for a trained text classifier.
//!
//! The channel decides per symptom whether the note mentions it
//! (`P(mention | present) = rho_present`, `P(mention | absent) = rho_absent`).
//! A mentioned symptom yields a probability vector concentrated on the true
//! value; an unmentioned one yields a vector concentrated on the absent
//! value, so a present-but-unmentioned symptom is confidently missed.

use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};

use super::PatientRecord;
use crate::error::{Error, Result};
use crate::model::{validate_network, DistVec, NetworkSpec, Role};
use crate::seed;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChannelConfig {
    pub rho_present: f64,
    pub rho_absent: f64,
    /// Upper bound of the per-draw mixing weight toward a uniform Dirichlet
    /// sample; 0 gives one-hot vectors.
    pub noise: f64,
}

impl Default for ChannelConfig {
    fn default() -> Self {
        ChannelConfig {
            rho_present: 0.8,
            rho_absent: 0.3,
            noise: 0.3,
        }
    }
}

impl ChannelConfig {
    pub fn validate(&self) -> Result<()> {
        let unit = |x: f64| (0.0..=1.0).contains(&x);
        if !unit(self.rho_present) || !unit(self.rho_absent) || !unit(self.noise) {
            return Err(Error::InvalidChannelParams(format!(
                "rho_present, rho_absent and noise must lie in [0, 1]: {self:?}"
            )));
        }
        Ok(())
    }
}

/// Simulated classifier output for a set of records.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChannelDraw {
    pub mentions: Vec<BTreeMap<String, bool>>,
    pub probs: BTreeMap<String, Vec<DistVec>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticData {
    pub records: Vec<PatientRecord>,
    pub channel: ChannelDraw,
}

fn sample_index<R: Rng>(rng: &mut R, probs: &[f64]) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.len() - 1
}

/// Draws `n` complete records (tabular values and symptom labels) in
/// topological order. Record ids are `p000000`, `p000001`, ...
pub fn sample_records(spec: &NetworkSpec, n: usize, seed_value: u64) -> Result<Vec<PatientRecord>> {
    validate_network(spec).map_err(Error::InvalidNetwork)?;
    let order = spec
        .topological_order()
        .map_err(|c| Error::InvalidConfig(format!("cycle through {c:?}")))?;
    let tables = spec.tables()?;
    let plan: Vec<(String, Vec<usize>, Vec<usize>, bool)> = order
        .iter()
        .map(|name| {
            let v = spec.variable(name).expect("validated");
            let parents = spec.parent_specs(name).expect("validated");
            let idx = parents
                .iter()
                .map(|p| spec.index(&p.name).expect("validated"))
                .collect();
            let cards = parents.iter().map(|p| p.card()).collect();
            (name.clone(), idx, cards, v.role == Role::Symptom)
        })
        .collect();
    let order_idx: Vec<usize> = order
        .iter()
        .map(|n| spec.index(n).expect("validated"))
        .collect();

    let mut rng = seed::rng(seed::derive_seed(seed_value, "sample_records"));
    let mut records = Vec::with_capacity(n);
    let mut values = vec![0usize; spec.variables.len()];
    for i in 0..n {
        let mut tabular = BTreeMap::new();
        let mut symptoms = BTreeMap::new();
        for ((name, parent_idx, cards, is_symptom), &vi) in plan.iter().zip(&order_idx) {
            let row = parent_idx
                .iter()
                .zip(cards)
                .fold(0, |acc, (&p, &k)| acc * k + values[p]);
            let value = sample_index(&mut rng, &tables[name][row]);
            values[vi] = value;
            if *is_symptom {
                symptoms.insert(name.clone(), value);
            } else {
                tabular.insert(name.clone(), value);
            }
        }
        let mut rec = PatientRecord::new(format!("p{i:06}"), tabular);
        rec.symptoms = Some(symptoms);
        records.push(rec);
    }
    Ok(records)
}

fn concentrated<R: Rng>(rng: &mut R, card: usize, target: usize, noise: f64) -> Vec<f64> {
    let mut probs = vec![0.0; card];
    probs[target] = 1.0;
    if noise <= 0.0 {
        return probs;
    }
    let w = rng.random::<f64>() * noise;
    let gamma = Gamma::new(1.0, 1.0).expect("valid shape");
    let draws: Vec<f64> = (0..card).map(|_| gamma.sample(rng)).collect();
    let total: f64 = draws.iter().sum();
    for (p, d) in probs.iter_mut().zip(&draws) {
        *p = (1.0 - w) * *p + w * d / total;
    }
    let s: f64 = probs.iter().sum();
    probs.iter_mut().for_each(|p| *p /= s);
    probs
}

/// Simulates mentions and classifier probabilities for labelled records.
pub fn simulate_channel(
    records: &[PatientRecord],
    spec: &NetworkSpec,
    channel: &ChannelConfig,
    seed_value: u64,
) -> Result<ChannelDraw> {
    channel.validate()?;
    let symptoms = spec.symptoms();
    let mut rng = seed::rng(seed::derive_seed(seed_value, "channel"));
    let mut mentions = Vec::with_capacity(records.len());
    let mut probs: BTreeMap<String, Vec<DistVec>> = symptoms
        .iter()
        .map(|s| (s.name.clone(), Vec::with_capacity(records.len())))
        .collect();
    for rec in records {
        let mut m = BTreeMap::new();
        for s in &symptoms {
            let truth = rec.symptom(&s.name).ok_or_else(|| {
                Error::Format(format!("record `{}` has no label for `{}`", rec.id, s.name))
            })?;
            let rho = if truth > 0 {
                channel.rho_present
            } else {
                channel.rho_absent
            };
            let mentioned = rng.random::<f64>() < rho;
            let target = if mentioned { truth } else { 0 };
            let p = concentrated(&mut rng, s.card(), target, channel.noise);
            m.insert(s.name.clone(), mentioned);
            probs.get_mut(&s.name).expect("initialized").push(DistVec {
                variable: s.name.clone(),
                probs: p,
            });
        }
        mentions.push(m);
    }
    Ok(ChannelDraw { mentions, probs })
}

/// Mask-style shift: each mention of a present symptom is removed with
/// probability `1 - new_rho / old_rho`, and removed mentions get a fresh
/// vector concentrated on the absent value. Other entries are untouched.
pub fn shift_channel(
    draw: &ChannelDraw,
    records: &[PatientRecord],
    old_rho_present: f64,
    new_rho_present: f64,
    noise: f64,
    seed_value: u64,
) -> Result<ChannelDraw> {
    if !(0.0..=old_rho_present).contains(&new_rho_present) || old_rho_present <= 0.0 {
        return Err(Error::InvalidChannelParams(format!(
            "shift must lower rho_present: {old_rho_present} -> {new_rho_present}"
        )));
    }
    if draw.mentions.len() != records.len() {
        return Err(Error::LengthMismatch {
            left: draw.mentions.len(),
            right: records.len(),
        });
    }
    let drop = 1.0 - new_rho_present / old_rho_present;
    let mut rng = seed::rng(seed::derive_seed(seed_value, "shift"));
    let mut out = draw.clone();
    for (i, rec) in records.iter().enumerate() {
        for (symptom, probs) in out.probs.iter_mut() {
            let truth = rec.symptom(symptom).unwrap_or(0);
            let mentioned = out.mentions[i].get(symptom).copied().unwrap_or(false);
            let u: f64 = rng.random();
            if truth > 0 && mentioned && u < drop {
                out.mentions[i].insert(symptom.clone(), false);
                let card = probs[i].card();
                probs[i].probs = concentrated(&mut rng, card, 0, noise);
            }
        }
    }
    Ok(out)
}

/// Records plus a simulated channel; mentions are also stored on the
/// records.
pub fn generate_synthetic(
    spec: &NetworkSpec,
    n: usize,
    seed_value: u64,
    channel: &ChannelConfig,
) -> Result<SyntheticData> {
    channel.validate()?;
    let mut records = sample_records(spec, n, seed_value)?;
    let draw = simulate_channel(&records, spec, channel, seed_value)?;
    for (rec, m) in records.iter_mut().zip(&draw.mentions) {
        rec.mentions = Some(m.clone());
    }
    Ok(SyntheticData {
        records,
        channel: draw,
    })
}

/// Note-like embeddings: each mentioned symptom adds a fixed random
/// direction for its value, plus isotropic Gaussian noise.
pub fn synthetic_embeddings(
    records: &[PatientRecord],
    spec: &NetworkSpec,
    dim: usize,
    noise_sd: f64,
    seed_value: u64,
) -> Vec<Vec<f32>> {
    let mut rng = seed::rng(seed::derive_seed(seed_value, "embedding-directions"));
    let mut directions: BTreeMap<(String, usize), Vec<f64>> = BTreeMap::new();
    for s in spec.symptoms() {
        for value in 0..s.card() {
            let v: Vec<f64> = (0..dim)
                .map(|_| rng.sample::<f64, _>(StandardNormal))
                .collect();
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-12);
            directions.insert(
                (s.name.clone(), value),
                v.into_iter().map(|x| x / norm).collect(),
            );
        }
    }
    let mut rng = seed::rng(seed::derive_seed(seed_value, "embedding-noise"));
    records
        .iter()
        .map(|rec| {
            let mut row: Vec<f64> = (0..dim)
                .map(|_| noise_sd * rng.sample::<f64, _>(StandardNormal))
                .collect();
            for s in spec.symptoms() {
                if rec.mentioned(&s.name).unwrap_or(false) {
                    let value = rec.symptom(&s.name).unwrap_or(0);
                    for (x, d) in row.iter_mut().zip(&directions[&(s.name.clone(), value)]) {
                        *x += d;
                    }
                }
            }
            row.into_iter().map(|x| x as f32).collect()
        })
        .collect()
}
