//! Truncated-Poisson regression with a log link. The mass is renormalized
//! over `0..K`, so the score for the linear predictor is
//! `k - E[m | rate, m < K]`.

use super::sgd::{ascend, RowObjective};
use super::FitConfig;
use crate::data::{column, PatientRecord};
use crate::error::{Error, Result};
use crate::model::{
    indicator_width, ln_factorial, parent_indicators, Cpd, NetworkSpec, RateModel, MAX_RATE,
    MIN_RATE,
};

pub struct TruncatedPoissonObjective {
    features: Vec<Vec<f64>>,
    counts: Vec<usize>,
    width: usize,
    card: usize,
    ln_fact: Vec<f64>,
}

impl TruncatedPoissonObjective {
    pub fn new(features: Vec<Vec<f64>>, counts: Vec<usize>, width: usize, card: usize) -> Self {
        TruncatedPoissonObjective {
            features,
            counts,
            width,
            card,
            ln_fact: (0..card).map(ln_factorial).collect(),
        }
    }

    /// `(ln Z, truncated mean)` where `Z = sum_{m<K} rate^m / m!`.
    fn normalizer(&self, ln_rate: f64) -> (f64, f64) {
        let logs: Vec<f64> = (0..self.card)
            .map(|m| m as f64 * ln_rate - self.ln_fact[m])
            .collect();
        let max = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let (mut z, mut zm) = (0.0, 0.0);
        for (m, l) in logs.iter().enumerate() {
            let w = (l - max).exp();
            z += w;
            zm += m as f64 * w;
        }
        (max + z.ln(), zm / z)
    }

    fn initial_theta(&self) -> Vec<f64> {
        let mut theta = vec![0.0; self.width + 1];
        let mean = self.counts.iter().sum::<usize>() as f64 / self.counts.len().max(1) as f64;
        theta[0] = mean.clamp(MIN_RATE, MAX_RATE).ln();
        theta
    }
}

impl RowObjective for TruncatedPoissonObjective {
    fn rows(&self) -> usize {
        self.counts.len()
    }

    fn dim(&self) -> usize {
        self.width + 1
    }

    fn accumulate(&self, theta: &[f64], i: usize, grad: &mut [f64]) -> f64 {
        let x = &self.features[i];
        let eta = theta[0] + theta[1..].iter().zip(x).map(|(w, x)| w * x).sum::<f64>();
        let clamped = eta.clamp(MIN_RATE.ln(), MAX_RATE.ln());
        let k = self.counts[i];
        let (ln_z, mean) = self.normalizer(clamped);
        if clamped == eta {
            let r = k as f64 - mean;
            grad[0] += r;
            for (g, xj) in grad[1..].iter_mut().zip(x) {
                *g += r * xj;
            }
        }
        k as f64 * clamped - self.ln_fact[k] - ln_z
    }
}

fn build(
    data: &[&PatientRecord],
    feature_vars: &[(&str, usize)],
    child: &str,
    card: usize,
) -> Result<TruncatedPoissonObjective> {
    let values = |name: &str| -> Result<Vec<usize>> {
        data.iter()
            .map(|r| {
                r.value(name).ok_or_else(|| {
                    Error::Format(format!("record `{}` has no value for `{name}`", r.id))
                })
            })
            .collect()
    };
    let counts = values(child)?;
    if let Some(&k) = counts.iter().find(|&&k| k >= card) {
        return Err(Error::Format(format!(
            "count {k} outside 0..{card} for `{child}`"
        )));
    }
    let cards: Vec<usize> = feature_vars.iter().map(|(_, c)| *c).collect();
    let cols = feature_vars
        .iter()
        .map(|(name, _)| values(name))
        .collect::<Result<Vec<_>>>()?;
    let features = (0..data.len())
        .map(|i| {
            let a: Vec<usize> = cols.iter().map(|c| c[i]).collect();
            parent_indicators(&cards, &a)
        })
        .collect();
    Ok(TruncatedPoissonObjective::new(
        features,
        counts,
        indicator_width(&cards),
        card,
    ))
}

fn fit_one(
    objective: &TruncatedPoissonObjective,
    cfg: &FitConfig,
    name: &str,
) -> Result<RateModel> {
    let theta = ascend(objective, objective.initial_theta(), cfg, name, None)?;
    Ok(RateModel {
        intercept: theta[0],
        weights: theta[1..].to_vec(),
    })
}

/// Fits one rate model per value of `split` (when given); a split value
/// absent from the data falls back to the pooled fit.
pub fn fit_truncated_poisson(
    data: &[PatientRecord],
    net: &NetworkSpec,
    child: &str,
    split: Option<&str>,
    cfg: &FitConfig,
) -> Result<Cpd> {
    if data.is_empty() {
        return Err(Error::EmptyData);
    }
    let var = net.variable(child)?;
    if !var.is_count() {
        return Err(Error::DomainMismatch(format!(
            "`{child}` is not a 0..K count variable"
        )));
    }
    let parents = net.parent_specs(child)?;
    if let Some(s) = split {
        if !parents.iter().any(|p| p.name == s) {
            return Err(Error::UnknownVariable(s.to_string()));
        }
    }
    let feature_vars: Vec<(&str, usize)> = parents
        .iter()
        .filter(|p| Some(p.name.as_str()) != split)
        .map(|p| (p.name.as_str(), p.card()))
        .collect();
    let all: Vec<&PatientRecord> = data.iter().collect();

    let models = match split {
        None => vec![fit_one(
            &build(&all, &feature_vars, child, var.card())?,
            cfg,
            child,
        )?],
        Some(s) => {
            let split_card = net.variable(s)?.card();
            let split_col = column(data, s)?;
            let mut pooled: Option<RateModel> = None;
            let mut models = Vec::with_capacity(split_card);
            for value in 0..split_card {
                let part: Vec<&PatientRecord> = all
                    .iter()
                    .zip(&split_col)
                    .filter(|(_, v)| **v == value)
                    .map(|(r, _)| *r)
                    .collect();
                if part.is_empty() {
                    if pooled.is_none() {
                        let obj = build(&all, &feature_vars, child, var.card())?;
                        pooled = Some(fit_one(&obj, cfg, &format!("{child}/pooled"))?);
                    }
                    models.push(pooled.clone().expect("set above"));
                } else {
                    let obj = build(&part, &feature_vars, child, var.card())?;
                    models.push(fit_one(&obj, cfg, &format!("{child}/{value}"))?);
                }
            }
            models
        }
    };
    Ok(Cpd::TruncatedPoisson {
        split: split.map(str::to_string),
        models,
    })
}
