//! Dense factors over discrete variables.
//!
//! Values are stored row-major in the declared scope order: the last scope
//! variable varies fastest.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Factor {
    scope: Vec<String>,
    cards: Vec<usize>,
    values: Vec<f64>,
}

fn strides(cards: &[usize]) -> Vec<usize> {
    let mut strides = vec![1; cards.len()];
    for i in (0..cards.len().saturating_sub(1)).rev() {
        strides[i] = strides[i + 1] * cards[i + 1];
    }
    strides
}

impl Factor {
    pub fn new(scope: Vec<String>, cards: Vec<usize>, values: Vec<f64>) -> Result<Self> {
        if scope.len() != cards.len() {
            return Err(Error::InvalidFactor(format!(
                "{} scope variables but {} cardinalities",
                scope.len(),
                cards.len()
            )));
        }
        for (i, name) in scope.iter().enumerate() {
            if scope[..i].contains(name) {
                return Err(Error::InvalidFactor(format!(
                    "duplicate scope variable `{name}`"
                )));
            }
        }
        if cards.contains(&0) {
            return Err(Error::InvalidFactor("zero cardinality".into()));
        }
        let size: usize = cards.iter().product();
        if values.len() != size {
            return Err(Error::InvalidFactor(format!(
                "expected {size} values, found {}",
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::InvalidFactor(
                "values must be finite and nonnegative".into(),
            ));
        }
        Ok(Factor {
            scope,
            cards,
            values,
        })
    }

    pub fn ones(scope: Vec<String>, cards: Vec<usize>) -> Result<Self> {
        let size = cards.iter().product();
        Factor::new(scope, cards, vec![1.0; size])
    }

    pub fn scalar(value: f64) -> Self {
        Factor {
            scope: Vec::new(),
            cards: Vec::new(),
            values: vec![value],
        }
    }

    pub fn scope(&self) -> &[String] {
        &self.scope
    }

    pub fn cards(&self) -> &[usize] {
        &self.cards
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn contains(&self, var: &str) -> bool {
        self.scope.iter().any(|s| s == var)
    }

    fn position(&self, var: &str) -> Option<usize> {
        self.scope.iter().position(|s| s == var)
    }

    pub fn card_of(&self, var: &str) -> Option<usize> {
        self.position(var).map(|i| self.cards[i])
    }

    /// Value at a full assignment given in scope order.
    pub fn get(&self, assignment: &[usize]) -> f64 {
        let st = strides(&self.cards);
        let idx: usize = assignment.iter().zip(&st).map(|(a, s)| a * s).sum();
        self.values[idx]
    }

    /// Pointwise product over the union scope (self's variables first).
    pub fn product(&self, other: &Factor) -> Result<Factor> {
        let mut scope = self.scope.clone();
        let mut cards = self.cards.clone();
        for (name, &card) in other.scope.iter().zip(&other.cards) {
            match self.position(name) {
                Some(i) if self.cards[i] != card => {
                    return Err(Error::DomainMismatch(format!(
                        "`{name}` has cardinality {} and {card}",
                        self.cards[i]
                    )));
                }
                Some(_) => {}
                None => {
                    scope.push(name.clone());
                    cards.push(card);
                }
            }
        }

        // Stride of each union variable inside each operand (0 when absent).
        let a_st = strides(&self.cards);
        let b_st = strides(&other.cards);
        let a_map: Vec<usize> = scope
            .iter()
            .map(|n| self.position(n).map_or(0, |i| a_st[i]))
            .collect();
        let b_map: Vec<usize> = scope
            .iter()
            .map(|n| other.position(n).map_or(0, |i| b_st[i]))
            .collect();

        let size: usize = cards.iter().product();
        let mut values = Vec::with_capacity(size);
        let mut assignment = vec![0usize; scope.len()];
        let (mut ai, mut bi) = (0usize, 0usize);
        for _ in 0..size {
            values.push(self.values[ai] * other.values[bi]);
            // odometer increment, last variable fastest
            for d in (0..scope.len()).rev() {
                assignment[d] += 1;
                ai += a_map[d];
                bi += b_map[d];
                if assignment[d] < cards[d] {
                    break;
                }
                ai -= a_map[d] * cards[d];
                bi -= b_map[d] * cards[d];
                assignment[d] = 0;
            }
        }
        Ok(Factor {
            scope,
            cards,
            values,
        })
    }

    /// Sums `var` out of the factor.
    pub fn marginalize(&self, var: &str) -> Result<Factor> {
        let pos = self
            .position(var)
            .ok_or_else(|| Error::VarNotInScope(var.to_string()))?;
        let card = self.cards[pos];
        let inner: usize = self.cards[pos + 1..].iter().product();
        let outer: usize = self.cards[..pos].iter().product();
        let mut values = vec![0.0; outer * inner];
        for o in 0..outer {
            for k in 0..card {
                let base = (o * card + k) * inner;
                for i in 0..inner {
                    values[o * inner + i] += self.values[base + i];
                }
            }
        }
        let mut scope = self.scope.clone();
        let mut cards = self.cards.clone();
        scope.remove(pos);
        cards.remove(pos);
        Ok(Factor {
            scope,
            cards,
            values,
        })
    }

    /// Restricts the factor to `var = value`, dropping `var` from the scope.
    pub fn reduce(&self, var: &str, value: usize) -> Result<Factor> {
        let pos = self
            .position(var)
            .ok_or_else(|| Error::VarNotInScope(var.to_string()))?;
        let card = self.cards[pos];
        if value >= card {
            return Err(Error::InvalidEvidence(format!(
                "value index {value} out of range for `{var}`"
            )));
        }
        let inner: usize = self.cards[pos + 1..].iter().product();
        let outer: usize = self.cards[..pos].iter().product();
        let mut values = Vec::with_capacity(outer * inner);
        for o in 0..outer {
            let base = (o * card + value) * inner;
            values.extend_from_slice(&self.values[base..base + inner]);
        }
        let mut scope = self.scope.clone();
        let mut cards = self.cards.clone();
        scope.remove(pos);
        cards.remove(pos);
        Ok(Factor {
            scope,
            cards,
            values,
        })
    }

    /// Reorders the scope; values are permuted accordingly.
    pub fn permute(&self, order: &[String]) -> Result<Factor> {
        if order.len() != self.scope.len() {
            return Err(Error::InvalidFactor(
                "permutation length differs from scope".into(),
            ));
        }
        let positions = order
            .iter()
            .map(|n| {
                self.position(n)
                    .ok_or_else(|| Error::VarNotInScope(n.clone()))
            })
            .collect::<Result<Vec<_>>>()?;
        let cards: Vec<usize> = positions.iter().map(|&p| self.cards[p]).collect();
        let src_st = strides(&self.cards);
        let size = self.values.len();
        let mut values = Vec::with_capacity(size);
        let mut assignment = vec![0usize; cards.len()];
        for _ in 0..size {
            let idx: usize = assignment
                .iter()
                .zip(&positions)
                .map(|(a, &p)| a * src_st[p])
                .sum();
            values.push(self.values[idx]);
            for d in (0..cards.len()).rev() {
                assignment[d] += 1;
                if assignment[d] < cards[d] {
                    break;
                }
                assignment[d] = 0;
            }
        }
        Ok(Factor {
            scope: order.to_vec(),
            cards,
            values,
        })
    }

    pub fn total(&self) -> f64 {
        self.values.iter().sum()
    }
}
