//! Exact posterior queries by variable elimination.
//!
//! Virtual evidence on a variable is a likelihood vector multiplied in as a
//! single-variable factor, which is equivalent to attaching an observed
//! child whose CPT column is that vector.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{validate_network, DistVec, Factor, NetworkSpec, Role};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Evidence {
    /// Observed value index per variable.
    pub hard: BTreeMap<String, usize>,
    /// Likelihood `P(observation | value)` per variable; need not sum to 1.
    pub likelihoods: BTreeMap<String, Vec<f64>>,
}

impl Evidence {
    pub fn new() -> Self {
        Evidence::default()
    }

    pub fn observe(mut self, var: impl Into<String>, value: usize) -> Self {
        self.hard.insert(var.into(), value);
        self
    }

    pub fn likelihood(mut self, var: impl Into<String>, weights: Vec<f64>) -> Self {
        self.likelihoods.insert(var.into(), weights);
        self
    }
}

/// A network with every CPD materialized as a factor, ready for repeated
/// queries.
#[derive(Clone, Debug)]
pub struct CompiledNetwork {
    names: Vec<String>,
    cards: Vec<usize>,
    roles: Vec<Role>,
    factors: Vec<Factor>,
}

impl CompiledNetwork {
    pub fn new(spec: &NetworkSpec) -> Result<Self> {
        validate_network(spec).map_err(Error::InvalidNetwork)?;
        let tables = spec.tables()?;
        let mut factors = Vec::with_capacity(spec.variables.len());
        for v in &spec.variables {
            let parents = spec.parent_specs(&v.name)?;
            let mut scope: Vec<String> = parents.iter().map(|p| p.name.clone()).collect();
            let mut cards: Vec<usize> = parents.iter().map(|p| p.card()).collect();
            scope.push(v.name.clone());
            cards.push(v.card());
            let values = tables[&v.name].iter().flatten().copied().collect();
            factors.push(Factor::new(scope, cards, values)?);
        }
        Ok(CompiledNetwork {
            names: spec.variables.iter().map(|v| v.name.clone()).collect(),
            cards: spec.variables.iter().map(|v| v.card()).collect(),
            roles: spec.variables.iter().map(|v| v.role).collect(),
            factors,
        })
    }

    fn index(&self, name: &str) -> Result<usize> {
        self.names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| Error::UnknownVariable(name.to_string()))
    }

    pub fn card(&self, name: &str) -> Result<usize> {
        Ok(self.cards[self.index(name)?])
    }

    pub fn symptoms(&self) -> Vec<&str> {
        self.names
            .iter()
            .zip(&self.roles)
            .filter(|(_, r)| **r == Role::Symptom)
            .map(|(n, _)| n.as_str())
            .collect()
    }

    fn check_evidence(&self, evidence: &Evidence) -> Result<()> {
        for (var, &value) in &evidence.hard {
            let card = self.card(var)?;
            if value >= card {
                return Err(Error::InvalidEvidence(format!(
                    "value index {value} out of range for `{var}`"
                )));
            }
            if evidence.likelihoods.contains_key(var) {
                return Err(Error::InvalidEvidence(format!(
                    "`{var}` has both hard and virtual evidence"
                )));
            }
        }
        for (var, weights) in &evidence.likelihoods {
            let card = self.card(var)?;
            if weights.len() != card {
                return Err(Error::DimensionMismatch {
                    expected: card,
                    found: weights.len(),
                });
            }
            if weights.iter().any(|w| !w.is_finite() || *w < 0.0)
                || weights.iter().all(|w| *w == 0.0)
            {
                return Err(Error::InvalidEvidence(format!(
                    "likelihood for `{var}` must be nonnegative and not all zero"
                )));
            }
        }
        Ok(())
    }

    /// Factors after applying hard evidence, plus one factor per likelihood.
    fn evidence_factors(&self, evidence: &Evidence) -> Result<Vec<Factor>> {
        let mut out = Vec::with_capacity(self.factors.len() + evidence.likelihoods.len());
        for f in &self.factors {
            let mut f = f.clone();
            for (var, &value) in &evidence.hard {
                if f.contains(var) {
                    f = f.reduce(var, value)?;
                }
            }
            out.push(f);
        }
        for (var, weights) in &evidence.likelihoods {
            out.push(Factor::new(
                vec![var.clone()],
                vec![self.card(var)?],
                weights.clone(),
            )?);
        }
        Ok(out)
    }

    /// Min-degree elimination order over the moral graph restricted to
    /// unobserved variables, ties broken lexicographically.
    pub fn elimination_order(&self, query: &str, evidence: &Evidence) -> Result<Vec<String>> {
        self.index(query)?;
        let mut adjacency: BTreeMap<&str, BTreeSet<&str>> = BTreeMap::new();
        for name in &self.names {
            if name != query && !evidence.hard.contains_key(name) {
                adjacency.insert(name, BTreeSet::new());
            }
        }
        for f in &self.factors {
            let live: Vec<&str> = f
                .scope()
                .iter()
                .map(|s| s.as_str())
                .filter(|s| !evidence.hard.contains_key(*s))
                .collect();
            for &a in &live {
                for &b in &live {
                    if a != b {
                        if let Some(set) = adjacency.get_mut(a) {
                            set.insert(b);
                        }
                    }
                }
            }
        }
        // The query stays in the graph as a neighbour but is never eliminated.
        let mut order = Vec::with_capacity(adjacency.len());
        while !adjacency.is_empty() {
            let (&next, _) = adjacency
                .iter()
                .min_by_key(|(name, nbrs)| (nbrs.len(), **name))
                .expect("non-empty");
            let nbrs: Vec<&str> = adjacency
                .remove(next)
                .unwrap_or_default()
                .into_iter()
                .collect();
            for &a in &nbrs {
                if let Some(set) = adjacency.get_mut(a) {
                    set.remove(next);
                    for &b in &nbrs {
                        if a != b {
                            set.insert(b);
                        }
                    }
                }
            }
            order.push(next.to_string());
        }
        Ok(order)
    }

    pub fn posterior(&self, evidence: &Evidence, query: &str) -> Result<DistVec> {
        let order = self.elimination_order(query, evidence)?;
        self.posterior_with_order(evidence, query, &order)
    }

    /// Posterior using a caller-supplied elimination order, which must list
    /// every unobserved non-query variable exactly once.
    pub fn posterior_with_order(
        &self,
        evidence: &Evidence,
        query: &str,
        order: &[String],
    ) -> Result<DistVec> {
        let qi = self.index(query)?;
        if evidence.hard.contains_key(query) {
            return Err(Error::InvalidEvidence(format!(
                "query `{query}` is hard-observed"
            )));
        }
        self.check_evidence(evidence)?;
        let expected: BTreeSet<&str> = self
            .names
            .iter()
            .map(|s| s.as_str())
            .filter(|n| *n != query && !evidence.hard.contains_key(*n))
            .collect();
        let given: BTreeSet<&str> = order.iter().map(|s| s.as_str()).collect();
        if given != expected || given.len() != order.len() {
            return Err(Error::InvalidConfig(
                "elimination order does not cover the hidden variables".into(),
            ));
        }

        let mut pool = self.evidence_factors(evidence)?;
        for var in order {
            let (touching, rest): (Vec<Factor>, Vec<Factor>) =
                pool.into_iter().partition(|f| f.contains(var));
            pool = rest;
            if touching.is_empty() {
                continue;
            }
            let mut product = touching[0].clone();
            for f in &touching[1..] {
                product = product.product(f)?;
            }
            pool.push(product.marginalize(var)?);
        }

        let mut result = Factor::ones(vec![query.to_string()], vec![self.cards[qi]])?;
        for f in &pool {
            result = result.product(f)?;
        }
        let result = result.permute(&[query.to_string()])?;
        DistVec::from_weights(query, result.values().to_vec())
    }

    /// Posterior of every symptom given tabular hard evidence and optional
    /// virtual evidence on the symptoms (the query symptom included).
    pub fn symptom_posteriors(
        &self,
        tab: &BTreeMap<String, usize>,
        virtual_evidence: Option<&BTreeMap<String, Vec<f64>>>,
    ) -> Result<BTreeMap<String, DistVec>> {
        let symptoms = self.symptoms();
        for var in tab.keys() {
            let i = self.index(var)?;
            if self.roles[i] == Role::Symptom {
                return Err(Error::InvalidEvidence(format!(
                    "symptom `{var}` cannot be tabular evidence"
                )));
            }
        }
        let evidence = Evidence {
            hard: tab.clone(),
            likelihoods: virtual_evidence.cloned().unwrap_or_default(),
        };
        symptoms
            .into_iter()
            .map(|s| Ok((s.to_string(), self.posterior(&evidence, s)?)))
            .collect()
    }
}

pub fn posterior(net: &NetworkSpec, evidence: &Evidence, query: &str) -> Result<DistVec> {
    CompiledNetwork::new(net)?.posterior(evidence, query)
}

pub fn elimination_order(
    net: &NetworkSpec,
    query: &str,
    evidence: &Evidence,
) -> Result<Vec<String>> {
    CompiledNetwork::new(net)?.elimination_order(query, evidence)
}

pub fn symptom_posteriors(
    net: &NetworkSpec,
    tab: &BTreeMap<String, usize>,
    virtual_evidence: Option<&BTreeMap<String, Vec<f64>>>,
) -> Result<BTreeMap<String, DistVec>> {
    CompiledNetwork::new(net)?.symptom_posteriors(tab, virtual_evidence)
}
