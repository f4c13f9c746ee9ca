use super::sgd::{ascend, RowObjective};
use super::FitConfig;
use crate::data::{column, PatientRecord};
use crate::error::{Error, Result};
use crate::model::{parent_indicators, sigmoid, Cpd, NetworkSpec};

/// Bernoulli log-likelihood with `theta = [intercept, weights...]`.
pub struct LogisticObjective {
    features: Vec<Vec<f64>>,
    outcome: Vec<bool>,
    width: usize,
}

impl LogisticObjective {
    pub fn new(features: Vec<Vec<f64>>, outcome: Vec<bool>, width: usize) -> Self {
        LogisticObjective {
            features,
            outcome,
            width,
        }
    }

    pub fn from_records(data: &[PatientRecord], net: &NetworkSpec, child: &str) -> Result<Self> {
        if net.variable(child)?.card() != 2 {
            return Err(Error::NonBinaryChild(child.to_string()));
        }
        let y = column(data, child)?;
        let parents = net.parent_specs(child)?;
        let cards: Vec<usize> = parents.iter().map(|p| p.card()).collect();
        let cols = parents
            .iter()
            .map(|p| column(data, &p.name))
            .collect::<Result<Vec<_>>>()?;
        let features = (0..data.len())
            .map(|i| {
                let a: Vec<usize> = cols.iter().map(|c| c[i]).collect();
                parent_indicators(&cards, &a)
            })
            .collect();
        let width = crate::model::indicator_width(&cards);
        Ok(LogisticObjective::new(
            features,
            y.into_iter().map(|v| v == 1).collect(),
            width,
        ))
    }
}

impl RowObjective for LogisticObjective {
    fn rows(&self) -> usize {
        self.outcome.len()
    }

    fn dim(&self) -> usize {
        self.width + 1
    }

    fn accumulate(&self, theta: &[f64], i: usize, grad: &mut [f64]) -> f64 {
        let x = &self.features[i];
        let z = theta[0] + theta[1..].iter().zip(x).map(|(w, x)| w * x).sum::<f64>();
        let p = sigmoid(z);
        let y = if self.outcome[i] { 1.0 } else { 0.0 };
        let r = y - p;
        grad[0] += r;
        for (g, xj) in grad[1..].iter_mut().zip(x) {
            *g += r * xj;
        }
        // log sigmoid(z) = -softplus(-z)
        let s = if y == 1.0 { -z } else { z };
        -(if s > 0.0 {
            s + (-s).exp().ln_1p()
        } else {
            s.exp().ln_1p()
        })
    }
}

pub fn fit_logistic(
    data: &[PatientRecord],
    net: &NetworkSpec,
    child: &str,
    cfg: &FitConfig,
) -> Result<Cpd> {
    if data.is_empty() {
        return Err(Error::EmptyData);
    }
    let objective = LogisticObjective::from_records(data, net, child)?;
    let theta = ascend(&objective, vec![0.0; objective.dim()], cfg, child, None)?;
    Ok(Cpd::Logistic {
        intercept: theta[0],
        weights: theta[1..].to_vec(),
    })
}
