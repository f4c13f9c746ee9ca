use rand::seq::SliceRandom;

use super::FitConfig;
use crate::error::{Error, Result};
use crate::seed;

/// A log-likelihood that decomposes over rows.
pub trait RowObjective: Sync {
    fn rows(&self) -> usize;

    fn dim(&self) -> usize;

    /// Adds the gradient of row `i`'s log-likelihood at `theta` to `grad`
    /// and returns that row's log-likelihood.
    fn accumulate(&self, theta: &[f64], i: usize, grad: &mut [f64]) -> f64;

    fn log_likelihood(&self, theta: &[f64]) -> f64 {
        let mut scratch = vec![0.0; self.dim()];
        (0..self.rows())
            .map(|i| self.accumulate(theta, i, &mut scratch))
            .sum()
    }

    fn gradient(&self, theta: &[f64]) -> Vec<f64> {
        let mut grad = vec![0.0; self.dim()];
        for i in 0..self.rows() {
            self.accumulate(theta, i, &mut grad);
        }
        grad
    }
}

/// Mini-batch gradient ascent on the mean batch log-likelihood. Rows are
/// reshuffled every epoch; the last partial batch is kept. When `trace` is
/// given, the full-data log-likelihood after each epoch is appended.
pub fn ascend<O: RowObjective>(
    objective: &O,
    mut theta: Vec<f64>,
    cfg: &FitConfig,
    name: &str,
    mut trace: Option<&mut Vec<f64>>,
) -> Result<Vec<f64>> {
    let n = objective.rows();
    if n == 0 {
        return Err(Error::EmptyData);
    }
    let mut rng = seed::rng(seed::derive_seed(cfg.seed, name));
    let mut order: Vec<usize> = (0..n).collect();
    let mut grad = vec![0.0; theta.len()];
    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(cfg.batch_size) {
            grad.iter_mut().for_each(|g| *g = 0.0);
            let mut ll = 0.0;
            for &i in batch {
                ll += objective.accumulate(&theta, i, &mut grad);
            }
            if !ll.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::Divergence(name.to_string()));
            }
            let step = cfg.learning_rate / batch.len() as f64;
            theta
                .iter_mut()
                .zip(&grad)
                .for_each(|(t, g)| *t += step * g);
        }
        if let Some(trace) = trace.as_deref_mut() {
            trace.push(objective.log_likelihood(&theta));
        }
    }
    if theta.iter().any(|t| !t.is_finite()) {
        return Err(Error::Divergence(name.to_string()));
    }
    Ok(theta)
}
