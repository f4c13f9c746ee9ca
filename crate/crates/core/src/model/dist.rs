use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const SUM_TOLERANCE: f64 = 1e-9;

/// A normalized probability vector over one variable's domain.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DistVec {
    pub variable: String,
    pub probs: Vec<f64>,
}

impl DistVec {
    pub fn new(variable: impl Into<String>, probs: Vec<f64>) -> Result<Self> {
        let variable = variable.into();
        if probs.is_empty() {
            return Err(Error::InvalidEvidence(format!(
                "empty distribution for `{variable}`"
            )));
        }
        if probs.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(Error::InvalidEvidence(format!(
                "negative or non-finite probability for `{variable}`"
            )));
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > SUM_TOLERANCE {
            return Err(Error::InvalidEvidence(format!(
                "distribution for `{variable}` sums to {sum}"
            )));
        }
        Ok(DistVec { variable, probs })
    }

    /// Normalizes nonnegative weights; fails if they sum to zero.
    pub fn from_weights(variable: impl Into<String>, weights: Vec<f64>) -> Result<Self> {
        let sum: f64 = weights.iter().sum();
        if !sum.is_finite() || sum <= 0.0 {
            return Err(Error::InconsistentEvidence);
        }
        let probs = weights.into_iter().map(|w| w / sum).collect();
        DistVec::new(variable, probs)
    }

    pub fn uniform(variable: impl Into<String>, card: usize) -> Self {
        DistVec {
            variable: variable.into(),
            probs: vec![1.0 / card as f64; card],
        }
    }

    pub fn one_hot(variable: impl Into<String>, card: usize, index: usize) -> Self {
        let mut probs = vec![0.0; card];
        probs[index] = 1.0;
        DistVec {
            variable: variable.into(),
            probs,
        }
    }

    /// Binary distribution `(1 - p, p)` over `{no, yes}`.
    pub fn binary(variable: impl Into<String>, p_yes: f64) -> Self {
        DistVec {
            variable: variable.into(),
            probs: vec![1.0 - p_yes, p_yes],
        }
    }

    pub fn card(&self) -> usize {
        self.probs.len()
    }

    pub fn argmax(&self) -> usize {
        self.probs
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |best, (i, &p)| {
                if p > best.1 {
                    (i, p)
                } else {
                    best
                }
            })
            .0
    }
}
