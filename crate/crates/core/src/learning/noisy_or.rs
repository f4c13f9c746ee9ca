//! Noisy-OR fitting in logit space: `theta = [logit(leak), logit(lambda_1), ...]`.

use super::sgd::{ascend, RowObjective};
use super::FitConfig;
use crate::data::{column, PatientRecord};
use crate::error::{Error, Result};
use crate::model::{sigmoid, Cpd, NetworkSpec};

pub const CLAMP: f64 = 1e-6;
const MIN_PROB: f64 = 1e-12;

fn softplus(a: f64) -> f64 {
    if a > 0.0 {
        a + (-a).exp().ln_1p()
    } else {
        a.exp().ln_1p()
    }
}

fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

pub struct NoisyOrObjective {
    /// Indices of active parents per row.
    active: Vec<Vec<usize>>,
    outcome: Vec<bool>,
    parents: usize,
}

impl NoisyOrObjective {
    pub fn new(active: Vec<Vec<usize>>, outcome: Vec<bool>, parents: usize) -> Self {
        NoisyOrObjective {
            active,
            outcome,
            parents,
        }
    }

    pub fn from_records(data: &[PatientRecord], net: &NetworkSpec, child: &str) -> Result<Self> {
        let var = net.variable(child)?;
        if var.card() != 2 {
            return Err(Error::NonBinaryChild(child.to_string()));
        }
        let y = column(data, child)?;
        let parents = net.parents(child);
        let cols = parents
            .iter()
            .map(|p| column(data, p))
            .collect::<Result<Vec<_>>>()?;
        let active = (0..data.len())
            .map(|i| (0..parents.len()).filter(|&j| cols[j][i] > 0).collect())
            .collect();
        Ok(NoisyOrObjective::new(
            active,
            y.into_iter().map(|v| v == 1).collect(),
            parents.len(),
        ))
    }
}

impl RowObjective for NoisyOrObjective {
    fn rows(&self) -> usize {
        self.outcome.len()
    }

    fn dim(&self) -> usize {
        self.parents + 1
    }

    fn accumulate(&self, theta: &[f64], i: usize, grad: &mut [f64]) -> f64 {
        let active = &self.active[i];
        // log q, q = P(no)
        let log_q =
            -softplus(theta[0]) - active.iter().map(|&j| softplus(theta[j + 1])).sum::<f64>();
        let (ll, dll_dlogq) = if self.outcome[i] {
            let p = (-log_q.exp_m1()).max(MIN_PROB);
            (p.ln(), -(1.0 - p) / p)
        } else {
            (log_q, 1.0)
        };
        grad[0] -= sigmoid(theta[0]) * dll_dlogq;
        for &j in active {
            grad[j + 1] -= sigmoid(theta[j + 1]) * dll_dlogq;
        }
        ll
    }
}

pub fn fit_noisy_or(
    data: &[PatientRecord],
    net: &NetworkSpec,
    child: &str,
    cfg: &FitConfig,
) -> Result<Cpd> {
    if data.is_empty() {
        return Err(Error::EmptyData);
    }
    let objective = NoisyOrObjective::from_records(data, net, child)?;
    let theta = ascend(&objective, initial_theta(&objective), cfg, child, None)?;
    Ok(theta_to_cpd(&theta))
}

pub fn initial_theta(objective: &NoisyOrObjective) -> Vec<f64> {
    let (mut base, mut total) = (0.0, 0.0);
    for (a, &y) in objective.active.iter().zip(&objective.outcome) {
        if a.is_empty() {
            total += 1.0;
            if y {
                base += 1.0;
            }
        }
    }
    let leak: f64 = if total > 0.0 {
        (base + 0.5) / (total + 1.0)
    } else {
        0.1
    };
    let mut theta = vec![0.0; objective.dim()];
    theta[0] = logit(leak.clamp(0.01, 0.99));
    theta
}

pub fn theta_to_cpd(theta: &[f64]) -> Cpd {
    let clamp = |a: f64| sigmoid(a).clamp(CLAMP, 1.0 - CLAMP);
    Cpd::NoisyOr {
        leak: clamp(theta[0]),
        lambdas: theta[1..].iter().map(|&a| clamp(a)).collect(),
    }
}
