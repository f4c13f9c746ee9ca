//! One-hidden-layer perceptron over note embeddings.
//!
//! Binary symptoms use a single logit with a sigmoid; larger domains use a
//! softmax over one logit per value. Parameters are kept as flat row-major
//! arrays so a checkpoint is plain JSON.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{sigmoid, DistVec};
use crate::seed;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Optimizer {
    Sgd,
    Adam,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MlpTrainConfig {
    pub hidden: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub dropout: f64,
    pub max_epochs: usize,
    pub patience: usize,
    pub tolerance: f64,
    pub folds: usize,
    pub optimizer: Optimizer,
    pub seed: u64,
}

impl Default for MlpTrainConfig {
    fn default() -> Self {
        MlpTrainConfig {
            hidden: 256,
            batch_size: 50,
            learning_rate: 5e-4,
            weight_decay: 1e-5,
            dropout: 0.0,
            max_epochs: 200,
            patience: 10,
            tolerance: 1e-3,
            folds: 5,
            optimizer: Optimizer::Adam,
            seed: 0,
        }
    }
}

impl MlpTrainConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.hidden > 0
            && self.batch_size > 0
            && self.learning_rate > 0.0
            && self.weight_decay >= 0.0
            && (0.0..1.0).contains(&self.dropout)
            && self.max_epochs > 0
            && self.tolerance >= 0.0
            && self.folds >= 2;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!(
                "bad classifier configuration: {self:?}"
            )))
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MlpModel {
    pub symptom: String,
    pub classes: usize,
    pub input: usize,
    pub hidden: usize,
    /// `input x hidden`
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    /// `hidden x outputs`
    pub w2: Vec<f64>,
    pub b2: Vec<f64>,
}

/// Gradient with the same layout as the model parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct MlpGradient {
    pub w1: Array2<f64>,
    pub b1: Array1<f64>,
    pub w2: Array2<f64>,
    pub b2: Array1<f64>,
}

impl MlpGradient {
    fn flatten(&self) -> Vec<f64> {
        self.w1
            .iter()
            .chain(&self.b1)
            .chain(self.w2.iter())
            .chain(&self.b2)
            .copied()
            .collect()
    }
}

impl MlpModel {
    /// Glorot-uniform weights, zero biases.
    pub fn init(
        symptom: &str,
        classes: usize,
        input: usize,
        hidden: usize,
        seed_value: u64,
    ) -> Self {
        let outputs = if classes == 2 { 1 } else { classes };
        let mut rng = seed::rng(seed::derive_seed(seed_value, "mlp-init"));
        let mut glorot = |fan_in: usize, fan_out: usize| {
            let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
            (0..fan_in * fan_out)
                .map(|_| rng.random_range(-a..a))
                .collect::<Vec<f64>>()
        };
        let w1 = glorot(input, hidden);
        let w2 = glorot(hidden, outputs);
        MlpModel {
            symptom: symptom.to_string(),
            classes,
            input,
            hidden,
            w1,
            b1: vec![0.0; hidden],
            w2,
            b2: vec![0.0; outputs],
        }
    }

    pub fn outputs(&self) -> usize {
        self.b2.len()
    }

    fn w1(&self) -> ArrayView2<'_, f64> {
        ArrayView2::from_shape((self.input, self.hidden), &self.w1).expect("checked shape")
    }

    fn w2(&self) -> ArrayView2<'_, f64> {
        ArrayView2::from_shape((self.hidden, self.outputs()), &self.w2).expect("checked shape")
    }

    pub fn check(&self) -> Result<()> {
        let outputs = if self.classes == 2 { 1 } else { self.classes };
        let shapes_ok = self.classes >= 2
            && self.w1.len() == self.input * self.hidden
            && self.b1.len() == self.hidden
            && self.w2.len() == self.hidden * outputs
            && self.b2.len() == outputs;
        if !shapes_ok {
            return Err(Error::Format(format!(
                "inconsistent classifier shapes for `{}`",
                self.symptom
            )));
        }
        if self.parameters().iter().any(|v| !v.is_finite()) {
            return Err(Error::Divergence(format!(
                "classifier for `{}`",
                self.symptom
            )));
        }
        Ok(())
    }

    pub fn parameters(&self) -> Vec<f64> {
        self.w1
            .iter()
            .chain(&self.b1)
            .chain(&self.w2)
            .chain(&self.b2)
            .copied()
            .collect()
    }

    pub fn set_parameters(&mut self, theta: &[f64]) {
        let mut it = theta.iter().copied();
        for v in self
            .w1
            .iter_mut()
            .chain(&mut self.b1)
            .chain(&mut self.w2)
            .chain(&mut self.b2)
        {
            *v = it.next().expect("parameter count");
        }
    }

    fn hidden_pre(&self, x: ArrayView2<'_, f64>) -> Array2<f64> {
        x.dot(&self.w1()) + ArrayView1::from(&self.b1)
    }

    fn logits(&self, h: &Array2<f64>) -> Array2<f64> {
        h.dot(&self.w2()) + ArrayView1::from(&self.b2)
    }

    fn probabilities(&self, logits: &Array2<f64>) -> Array2<f64> {
        let mut p = Array2::zeros((logits.nrows(), self.classes));
        for (mut row, z) in p.rows_mut().into_iter().zip(logits.rows()) {
            if self.classes == 2 {
                let q = sigmoid(z[0]);
                row[0] = 1.0 - q;
                row[1] = q;
            } else {
                let max = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let e: Vec<f64> = z.iter().map(|v| (v - max).exp()).collect();
                let total: f64 = e.iter().sum();
                for (r, v) in row.iter_mut().zip(e) {
                    *r = v / total;
                }
            }
        }
        p
    }

    fn check_input(&self, x: ArrayView2<'_, f64>) -> Result<()> {
        if x.ncols() != self.input {
            return Err(Error::DimensionMismatch {
                expected: self.input,
                found: x.ncols(),
            });
        }
        Ok(())
    }

    pub fn predict_proba(&self, x: ArrayView2<'_, f64>) -> Result<Vec<DistVec>> {
        self.check_input(x)?;
        let h = self.hidden_pre(x).mapv(|v| v.max(0.0));
        let p = self.probabilities(&self.logits(&h));
        Ok(p.rows()
            .into_iter()
            .map(|r| DistVec {
                variable: self.symptom.clone(),
                probs: r.to_vec(),
            })
            .collect())
    }

    /// Mean cross-entropy over `x`, without the penalty.
    pub fn cross_entropy(&self, x: ArrayView2<'_, f64>, labels: &[usize]) -> Result<f64> {
        let probs = self.predict_proba(x)?;
        Ok(probs
            .iter()
            .zip(labels)
            .map(|(p, &y)| -p.probs[y].max(1e-300).ln())
            .sum::<f64>()
            / labels.len() as f64)
    }

    /// Objective `mean CE + weight_decay / 2 * |theta|^2` and its gradient.
    /// `mask` multiplies the hidden activations (inverted dropout).
    pub fn loss_and_gradient(
        &self,
        x: ArrayView2<'_, f64>,
        labels: &[usize],
        weight_decay: f64,
        mask: Option<&Array2<f64>>,
    ) -> Result<(f64, MlpGradient)> {
        self.check_input(x)?;
        if x.nrows() != labels.len() {
            return Err(Error::LengthMismatch {
                left: x.nrows(),
                right: labels.len(),
            });
        }
        let n = labels.len() as f64;
        let pre = self.hidden_pre(x);
        let mut h = pre.mapv(|v| v.max(0.0));
        if let Some(m) = mask {
            h *= m;
        }
        let z = self.logits(&h);
        let p = self.probabilities(&z);
        let mut loss = 0.0;
        let mut dz = Array2::zeros(z.raw_dim());
        for (i, &y) in labels.iter().enumerate() {
            loss -= p[[i, y]].max(1e-300).ln();
            if self.classes == 2 {
                dz[[i, 0]] = (p[[i, 1]] - if y == 1 { 1.0 } else { 0.0 }) / n;
            } else {
                for c in 0..self.classes {
                    dz[[i, c]] = (p[[i, c]] - if c == y { 1.0 } else { 0.0 }) / n;
                }
            }
        }
        loss /= n;
        let w2 = self.w2();
        let dw2 = h.t().dot(&dz);
        let db2 = dz.sum_axis(Axis(0));
        let mut dh = dz.dot(&w2.t());
        dh.zip_mut_with(&pre, |g, &a| {
            if a <= 0.0 {
                *g = 0.0;
            }
        });
        if let Some(m) = mask {
            dh *= m;
        }
        let dw1 = x.t().dot(&dh);
        let db1 = dh.sum_axis(Axis(0));
        let mut grad = MlpGradient {
            w1: dw1,
            b1: db1,
            w2: dw2,
            b2: db2,
        };
        if weight_decay > 0.0 {
            let theta = self.parameters();
            loss += 0.5 * weight_decay * theta.iter().map(|v| v * v).sum::<f64>();
            grad.w1.scaled_add(weight_decay, &self.w1());
            grad.b1
                .scaled_add(weight_decay, &ArrayView1::from(&self.b1));
            grad.w2.scaled_add(weight_decay, &w2);
            grad.b2
                .scaled_add(weight_decay, &ArrayView1::from(&self.b2));
        }
        Ok((loss, grad))
    }
}

struct OptimizerState {
    kind: Optimizer,
    lr: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl OptimizerState {
    fn new(kind: Optimizer, lr: f64, dim: usize) -> Self {
        OptimizerState {
            kind,
            lr,
            m: vec![0.0; dim],
            v: vec![0.0; dim],
            t: 0,
        }
    }

    fn step(&mut self, theta: &mut [f64], grad: &[f64]) {
        match self.kind {
            Optimizer::Sgd => theta
                .iter_mut()
                .zip(grad)
                .for_each(|(p, g)| *p -= self.lr * g),
            Optimizer::Adam => {
                const B1: f64 = 0.9;
                const B2: f64 = 0.999;
                self.t += 1;
                let c1 = 1.0 - B1.powi(self.t);
                let c2 = 1.0 - B2.powi(self.t);
                for (((p, g), m), v) in theta.iter_mut().zip(grad).zip(&mut self.m).zip(&mut self.v)
                {
                    *m = B1 * *m + (1.0 - B1) * g;
                    *v = B2 * *v + (1.0 - B2) * g * g;
                    *p -= self.lr * (*m / c1) / ((*v / c2).sqrt() + 1e-8);
                }
            }
        }
    }
}

/// Runs `epochs` passes of mini-batch training, calling `after_epoch` with
/// the epoch number (from 1) after each; it returns `false` to stop early.
fn train_epochs(
    model: &mut MlpModel,
    x: ArrayView2<'_, f64>,
    labels: &[usize],
    cfg: &MlpTrainConfig,
    seed_value: u64,
    mut after_epoch: impl FnMut(&MlpModel, usize) -> bool,
) -> Result<()> {
    let n = labels.len();
    let mut rng = seed::rng(seed_value);
    let mut order: Vec<usize> = (0..n).collect();
    let mut theta = model.parameters();
    let mut opt = OptimizerState::new(cfg.optimizer, cfg.learning_rate, theta.len());
    for epoch in 1..=cfg.max_epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(cfg.batch_size) {
            let xb = x.select(Axis(0), batch);
            let yb: Vec<usize> = batch.iter().map(|&i| labels[i]).collect();
            let mask = (cfg.dropout > 0.0).then(|| {
                let keep = 1.0 - cfg.dropout;
                Array2::from_shape_fn((batch.len(), model.hidden), |_| {
                    if rng.random::<f64>() < keep {
                        1.0 / keep
                    } else {
                        0.0
                    }
                })
            });
            let (loss, grad) =
                model.loss_and_gradient(xb.view(), &yb, cfg.weight_decay, mask.as_ref())?;
            if !loss.is_finite() {
                return Err(Error::Divergence(format!(
                    "classifier for `{}`",
                    model.symptom
                )));
            }
            opt.step(&mut theta, &grad.flatten());
            model.set_parameters(&theta);
        }
        if !after_epoch(model, epoch) {
            break;
        }
    }
    model.check()
}

/// Fold id per row: a seeded permutation dealt round-robin.
pub fn fold_assignment(n: usize, folds: usize, seed_value: u64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut seed::rng(seed::derive_seed(seed_value, "folds")));
    let mut fold = vec![0; n];
    for (pos, &i) in order.iter().enumerate() {
        fold[i] = pos % folds;
    }
    fold
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MlpFit {
    pub model: MlpModel,
    /// Out-of-fold probabilities, aligned with the training rows.
    pub out_of_fold: Vec<DistVec>,
    pub fold_epochs: Vec<usize>,
    pub epochs: usize,
}

fn check_training_input(
    x: ArrayView2<'_, f64>,
    labels: &[usize],
    classes: usize,
    cfg: &MlpTrainConfig,
) -> Result<()> {
    cfg.validate()?;
    if x.nrows() != labels.len() {
        return Err(Error::LengthMismatch {
            left: x.nrows(),
            right: labels.len(),
        });
    }
    if labels.len() < cfg.folds {
        return Err(Error::InsufficientData {
            needed: cfg.folds,
            available: labels.len(),
        });
    }
    if let Some(&bad) = labels.iter().find(|&&y| y >= classes) {
        return Err(Error::DomainMismatch(format!(
            "label {bad} outside {classes} classes"
        )));
    }
    let first = labels[0];
    if labels.iter().all(|&y| y == first) {
        return Err(Error::SingleClassLabels);
    }
    Ok(())
}

/// K-fold training with early stopping on validation cross-entropy, then a
/// refit on all rows for the median stopping epoch. Each fold stops once the
/// validation loss has not improved by more than `tolerance` for `patience`
/// epochs (or at `max_epochs`); its stopping epoch is the epoch at which it
/// stopped, and its model at that point supplies the out-of-fold
/// probabilities.
pub fn fit_mlp(
    symptom: &str,
    classes: usize,
    x: ArrayView2<'_, f64>,
    labels: &[usize],
    cfg: &MlpTrainConfig,
) -> Result<MlpFit> {
    check_training_input(x, labels, classes, cfg)?;
    let n = labels.len();
    let fold = fold_assignment(n, cfg.folds, cfg.seed);
    let results: Vec<(usize, Vec<(usize, DistVec)>)> = (0..cfg.folds)
        .into_par_iter()
        .map(|k| {
            let train: Vec<usize> = (0..n).filter(|&i| fold[i] != k).collect();
            let valid: Vec<usize> = (0..n).filter(|&i| fold[i] == k).collect();
            let xt = x.select(Axis(0), &train);
            let yt: Vec<usize> = train.iter().map(|&i| labels[i]).collect();
            let xv = x.select(Axis(0), &valid);
            let yv: Vec<usize> = valid.iter().map(|&i| labels[i]).collect();
            let fold_seed = seed::derive_seed_n(cfg.seed, "fold", k as u64);
            let mut model = MlpModel::init(symptom, classes, x.ncols(), cfg.hidden, fold_seed);
            let (mut best, mut wait, mut stopped) = (f64::INFINITY, 0usize, cfg.max_epochs);
            train_epochs(&mut model, xt.view(), &yt, cfg, fold_seed, |m, epoch| {
                let loss = m.cross_entropy(xv.view(), &yv).unwrap_or(f64::INFINITY);
                if loss < best - cfg.tolerance {
                    best = loss;
                    wait = 0;
                } else {
                    wait += 1;
                }
                if wait >= cfg.patience {
                    stopped = epoch;
                    return false;
                }
                true
            })?;
            let probs = model.predict_proba(xv.view())?;
            Ok((stopped, valid.into_iter().zip(probs).collect()))
        })
        .collect::<Result<_>>()?;

    let mut fold_epochs: Vec<usize> = results.iter().map(|(e, _)| *e).collect();
    let mut out_of_fold: Vec<Option<DistVec>> = vec![None; n];
    for (_, preds) in results {
        for (i, p) in preds {
            out_of_fold[i] = Some(p);
        }
    }
    let out_of_fold: Vec<DistVec> = out_of_fold
        .into_iter()
        .map(|p| p.expect("every row validated once"))
        .collect();

    let mut sorted = fold_epochs.clone();
    sorted.sort_unstable();
    let epochs = sorted[(sorted.len() - 1) / 2].max(1);
    let final_seed = seed::derive_seed(cfg.seed, "final");
    let mut model = MlpModel::init(symptom, classes, x.ncols(), cfg.hidden, final_seed);
    let full_cfg = MlpTrainConfig {
        max_epochs: epochs,
        ..cfg.clone()
    };
    train_epochs(&mut model, x, labels, &full_cfg, final_seed, |_, _| true)?;
    fold_epochs.shrink_to_fit();
    Ok(MlpFit {
        model,
        out_of_fold,
        fold_epochs,
        epochs,
    })
}

pub fn train_mlp(
    symptom: &str,
    classes: usize,
    x: ArrayView2<'_, f64>,
    labels: &[usize],
    cfg: &MlpTrainConfig,
) -> Result<MlpModel> {
    Ok(fit_mlp(symptom, classes, x, labels, cfg)?.model)
}

pub fn cross_fitted_proba(
    symptom: &str,
    classes: usize,
    x: ArrayView2<'_, f64>,
    labels: &[usize],
    cfg: &MlpTrainConfig,
) -> Result<Vec<DistVec>> {
    Ok(fit_mlp(symptom, classes, x, labels, cfg)?.out_of_fold)
}

/// Trains for exactly `epochs` epochs with no validation; used to compare
/// in-sample and held-out fit.
pub fn train_fixed_epochs(
    symptom: &str,
    classes: usize,
    x: ArrayView2<'_, f64>,
    labels: &[usize],
    epochs: usize,
    cfg: &MlpTrainConfig,
) -> Result<MlpModel> {
    let cfg = MlpTrainConfig {
        max_epochs: epochs,
        ..cfg.clone()
    };
    cfg.validate()?;
    let mut model = MlpModel::init(symptom, classes, x.ncols(), cfg.hidden, cfg.seed);
    train_epochs(&mut model, x, labels, &cfg, cfg.seed, |_, _| true)?;
    Ok(model)
}
