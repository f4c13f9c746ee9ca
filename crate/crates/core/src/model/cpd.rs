//! Conditional probability distribution families and their materialization
//! into tables.

use serde::{Deserialize, Serialize};

use super::network::VariableSpec;
use crate::error::{Error, Result};

/// Entries of materialized parametric CPDs never drop below this value.
pub const PROBABILITY_FLOOR: f64 = 1e-12;
/// Rate bounds for the truncated-Poisson family.
pub const MIN_RATE: f64 = 1e-3;
pub const MAX_RATE: f64 = 1e3;

/// Log-linear rate model: `rate = exp(intercept + weights . x)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateModel {
    pub intercept: f64,
    pub weights: Vec<f64>,
}

impl RateModel {
    pub fn rate(&self, features: &[f64]) -> f64 {
        let eta = self.intercept
            + self
                .weights
                .iter()
                .zip(features)
                .map(|(w, x)| w * x)
                .sum::<f64>();
        eta.exp().clamp(MIN_RATE, MAX_RATE)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "params", rename_all = "snake_case")]
pub enum Cpd {
    /// One row per parent assignment (first parent slowest), one column per
    /// child value.
    Table { rows: Vec<Vec<f64>> },
    /// `P(yes) = 1 - (1 - leak) * prod over active parents of (1 - lambda_j)`.
    /// A parent is active when it takes any value other than its first.
    NoisyOr { leak: f64, lambdas: Vec<f64> },
    /// `P(yes) = sigmoid(intercept + weights . x)` over parent indicators.
    Logistic { intercept: f64, weights: Vec<f64> },
    /// Poisson counts truncated to the child's domain `0..K`. With `split`
    /// set, one rate model per value of that parent, whose indicators are
    /// then excluded from the features.
    TruncatedPoisson {
        #[serde(default)]
        split: Option<String>,
        models: Vec<RateModel>,
    },
}

impl Cpd {
    pub fn kind(&self) -> &'static str {
        match self {
            Cpd::Table { .. } => "table",
            Cpd::NoisyOr { .. } => "noisy_or",
            Cpd::Logistic { .. } => "logistic",
            Cpd::TruncatedPoisson { .. } => "truncated_poisson",
        }
    }
}

/// Indicator features for a parent assignment: `K - 1` columns per parent,
/// one for each non-reference value.
pub fn parent_indicators(parent_cards: &[usize], assignment: &[usize]) -> Vec<f64> {
    let width: usize = parent_cards.iter().map(|c| c - 1).sum();
    let mut x = vec![0.0; width];
    let mut offset = 0;
    for (&card, &value) in parent_cards.iter().zip(assignment) {
        if value > 0 {
            x[offset + value - 1] = 1.0;
        }
        offset += card - 1;
    }
    x
}

pub fn indicator_width(parent_cards: &[usize]) -> usize {
    parent_cards.iter().map(|c| c - 1).sum()
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `ln k!` for small k.
pub fn ln_factorial(k: usize) -> f64 {
    (2..=k).map(|i| (i as f64).ln()).sum()
}

/// Poisson mass at `0..card`, renormalized over that range.
pub fn truncated_poisson_pmf(rate: f64, card: usize) -> Vec<f64> {
    let ln_rate = rate.ln();
    let logs: Vec<f64> = (0..card)
        .map(|k| k as f64 * ln_rate - ln_factorial(k))
        .collect();
    let max = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let unnorm: Vec<f64> = logs.iter().map(|l| (l - max).exp()).collect();
    let z: f64 = unnorm.iter().sum();
    unnorm.into_iter().map(|u| u / z).collect()
}

/// Iterates all assignments of `cards` in row-major order.
pub fn for_each_assignment(cards: &[usize], mut f: impl FnMut(&[usize])) {
    let total: usize = cards.iter().product();
    let mut a = vec![0usize; cards.len()];
    for _ in 0..total {
        f(&a);
        for d in (0..cards.len()).rev() {
            a[d] += 1;
            if a[d] < cards[d] {
                break;
            }
            a[d] = 0;
        }
    }
}

fn floor_and_normalize(row: &mut [f64]) {
    for p in row.iter_mut() {
        if *p < PROBABILITY_FLOOR {
            *p = PROBABILITY_FLOOR;
        }
    }
    let s: f64 = row.iter().sum();
    row.iter_mut().for_each(|p| *p /= s);
}

fn check_len(what: &str, child: &str, expected: usize, found: usize) -> Result<()> {
    if expected != found {
        return Err(Error::DomainMismatch(format!(
            "`{child}`: {what} expects {expected} entries, found {found}"
        )));
    }
    Ok(())
}

/// Evaluates a CPD for every parent assignment. Table input is returned
/// unchanged; parametric families get the probability floor applied.
pub fn cpd_as_table(
    cpd: &Cpd,
    child: &VariableSpec,
    parents: &[&VariableSpec],
) -> Result<Vec<Vec<f64>>> {
    let parent_cards: Vec<usize> = parents.iter().map(|p| p.card()).collect();
    let n_rows: usize = parent_cards.iter().product();
    let card = child.card();
    let mut rows = Vec::with_capacity(n_rows);

    match cpd {
        Cpd::Table { rows: table } => {
            check_len("table rows", &child.name, n_rows, table.len())?;
            for row in table {
                check_len("table row", &child.name, card, row.len())?;
            }
            return Ok(table.clone());
        }
        Cpd::NoisyOr { leak, lambdas } => {
            if card != 2 {
                return Err(Error::NoisyOrOnNonBinaryChild(child.name.clone()));
            }
            check_len(
                "noisy-or lambdas",
                &child.name,
                parents.len(),
                lambdas.len(),
            )?;
            for_each_assignment(&parent_cards, |a| {
                let q = a
                    .iter()
                    .zip(lambdas)
                    .filter(|(v, _)| **v > 0)
                    .fold(1.0 - leak, |q, (_, l)| q * (1.0 - l));
                let mut row = vec![q, 1.0 - q];
                floor_and_normalize(&mut row);
                rows.push(row);
            });
        }
        Cpd::Logistic { intercept, weights } => {
            if card != 2 {
                return Err(Error::NonBinaryChild(child.name.clone()));
            }
            check_len(
                "logistic weights",
                &child.name,
                indicator_width(&parent_cards),
                weights.len(),
            )?;
            for_each_assignment(&parent_cards, |a| {
                let x = parent_indicators(&parent_cards, a);
                let z = intercept + weights.iter().zip(&x).map(|(w, x)| w * x).sum::<f64>();
                let p = sigmoid(z);
                let mut row = vec![1.0 - p, p];
                floor_and_normalize(&mut row);
                rows.push(row);
            });
        }
        Cpd::TruncatedPoisson { split, models } => {
            let split_pos = match split {
                Some(name) => Some(
                    parents
                        .iter()
                        .position(|p| &p.name == name)
                        .ok_or_else(|| Error::UnknownVariable(name.clone()))?,
                ),
                None => None,
            };
            let expected_models = split_pos.map_or(1, |i| parent_cards[i]);
            check_len("rate models", &child.name, expected_models, models.len())?;
            let feature_cards: Vec<usize> = parent_cards
                .iter()
                .enumerate()
                .filter(|(i, _)| Some(*i) != split_pos)
                .map(|(_, c)| *c)
                .collect();
            let width = indicator_width(&feature_cards);
            for m in models {
                check_len("rate weights", &child.name, width, m.weights.len())?;
            }
            for_each_assignment(&parent_cards, |a| {
                let rest: Vec<usize> = a
                    .iter()
                    .enumerate()
                    .filter(|(i, _)| Some(*i) != split_pos)
                    .map(|(_, v)| *v)
                    .collect();
                let model = &models[split_pos.map_or(0, |i| a[i])];
                let rate = model.rate(&parent_indicators(&feature_cards, &rest));
                let mut row = truncated_poisson_pmf(rate, card);
                floor_and_normalize(&mut row);
                rows.push(row);
            });
        }
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Role;

    fn binary(name: &str) -> VariableSpec {
        VariableSpec::new(name, &["no", "yes"], Role::Background)
    }

    fn days() -> VariableSpec {
        let labels: Vec<String> = (0..16).map(|k| k.to_string()).collect();
        VariableSpec {
            name: "days".into(),
            domain: labels,
            role: Role::Outcome,
        }
    }

    #[test]
    fn noisy_or_single_cause() {
        let cpd = Cpd::NoisyOr {
            leak: 0.0,
            lambdas: vec![0.7],
        };
        let rows = cpd_as_table(&cpd, &binary("s"), &[&binary("a")]).unwrap();
        assert!((rows[1][1] - 0.7).abs() < 1e-12);
        // inactive parent with no leak hits the floor
        assert!(rows[0][1] <= 2.0 * PROBABILITY_FLOOR);
    }

    #[test]
    fn noisy_or_two_causes() {
        let cpd = Cpd::NoisyOr {
            leak: 0.0,
            lambdas: vec![0.5, 0.5],
        };
        let rows = cpd_as_table(&cpd, &binary("s"), &[&binary("a"), &binary("b")]).unwrap();
        assert!((rows[3][1] - 0.75).abs() < 1e-12);
        assert!((rows[1][1] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn noisy_or_rejects_ternary_child() {
        let fever = VariableSpec::new("fever", &["none", "low", "high"], Role::Symptom);
        let cpd = Cpd::NoisyOr {
            leak: 0.0,
            lambdas: vec![0.5],
        };
        assert!(matches!(
            cpd_as_table(&cpd, &fever, &[&binary("a")]),
            Err(Error::NoisyOrOnNonBinaryChild(_))
        ));
    }

    #[test]
    fn zero_logistic_is_half() {
        let cpd = Cpd::Logistic {
            intercept: 0.0,
            weights: vec![0.0; 3],
        };
        let fever = VariableSpec::new("fever", &["none", "low", "high"], Role::Symptom);
        let rows = cpd_as_table(&cpd, &binary("ab"), &[&binary("a"), &fever]).unwrap();
        assert_eq!(rows.len(), 6);
        assert!(rows.iter().all(|r| (r[1] - 0.5).abs() < 1e-15));
    }

    #[test]
    fn truncated_poisson_matches_series() {
        let cpd = Cpd::TruncatedPoisson {
            split: None,
            models: vec![RateModel {
                intercept: 2.0f64.ln(),
                weights: vec![],
            }],
        };
        let rows = cpd_as_table(&cpd, &days(), &[]).unwrap();
        // brute-force mass summation with running products
        let mut terms = Vec::new();
        let mut term = (-2.0f64).exp();
        for k in 0..16 {
            if k > 0 {
                term *= 2.0 / k as f64;
            }
            terms.push(term);
        }
        let z: f64 = terms.iter().sum();
        for k in 0..16 {
            assert!((rows[0][k] - terms[k] / z).abs() < 1e-12, "k={k}");
        }
        assert!((rows[0].iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn truncated_poisson_split_selects_model() {
        let cpd = Cpd::TruncatedPoisson {
            split: Some("ab".into()),
            models: vec![
                RateModel {
                    intercept: 0.0,
                    weights: vec![0.0],
                },
                RateModel {
                    intercept: 1.0,
                    weights: vec![0.0],
                },
            ],
        };
        let rows = cpd_as_table(&cpd, &days(), &[&binary("ab"), &binary("x")]).unwrap();
        assert_eq!(rows.len(), 4);
        assert_eq!(rows[0], rows[1]);
        assert_ne!(rows[0], rows[2]);
        let pmf = truncated_poisson_pmf(1f64.exp(), 16);
        assert!(rows[2].iter().zip(&pmf).all(|(a, b)| (a - b).abs() < 1e-15));
    }

    #[test]
    fn parent_indicator_layout() {
        assert_eq!(parent_indicators(&[2, 3], &[1, 2]), vec![1.0, 0.0, 1.0]);
        assert_eq!(parent_indicators(&[2, 3], &[0, 1]), vec![0.0, 1.0, 0.0]);
    }
}
