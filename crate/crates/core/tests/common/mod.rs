//! Oracles shared by the integration tests.
#![allow(dead_code)]

use std::collections::BTreeMap;

use bnfuse::inference::Evidence;
use bnfuse::model::{Cpd, NetworkSpec, Role, VariableSpec};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};

/// Random DAG over at most `max_vars` binary/ternary variables with a joint
/// state space of at most 4096, mixing table and noisy-OR CPDs.
pub fn random_network(rng: &mut ChaCha8Rng, max_vars: usize) -> NetworkSpec {
    let count = rng.random_range(2..=max_vars);
    let mut cards = Vec::new();
    let mut space = 1usize;
    for _ in 0..count {
        let card = rng.random_range(2..=3);
        if space * card > 4096 {
            break;
        }
        space *= card;
        cards.push(card);
    }
    let names: Vec<String> = (0..cards.len()).map(|i| format!("v{i:02}")).collect();
    let variables: Vec<VariableSpec> = names
        .iter()
        .zip(&cards)
        .map(|(n, &k)| {
            let labels: Vec<String> = (0..k).map(|j| format!("s{j}")).collect();
            let labels: Vec<&str> = labels.iter().map(String::as_str).collect();
            VariableSpec::new(n, &labels, Role::Background)
        })
        .collect();
    let mut edges = Vec::new();
    let mut cpds = BTreeMap::new();
    let gamma = Gamma::new(1.0, 1.0).unwrap();
    for i in 0..names.len() {
        let parents: Vec<usize> = (0..i).filter(|_| rng.random_bool(0.3)).take(3).collect();
        for &p in &parents {
            edges.push((names[p].clone(), names[i].clone()));
        }
        let cpd = if cards[i] == 2 && !parents.is_empty() && rng.random_bool(0.3) {
            Cpd::NoisyOr {
                leak: rng.random_range(0.01..0.3),
                lambdas: parents
                    .iter()
                    .map(|_| rng.random_range(0.05..0.95))
                    .collect(),
            }
        } else {
            let rows = parents.iter().map(|&p| cards[p]).product::<usize>();
            Cpd::Table {
                rows: (0..rows)
                    .map(|_| {
                        let w: Vec<f64> = (0..cards[i]).map(|_| gamma.sample(rng) + 1e-3).collect();
                        let s: f64 = w.iter().sum();
                        w.into_iter().map(|x| x / s).collect()
                    })
                    .collect(),
            }
        };
        cpds.insert(names[i].clone(), cpd);
    }
    NetworkSpec {
        variables,
        edges,
        cpds,
    }
}

/// Posterior by summing the full joint.
pub fn enumerate(net: &NetworkSpec, evidence: &Evidence, query: &str) -> Vec<f64> {
    let tables = net.tables().unwrap();
    let cards: Vec<usize> = net.variables.iter().map(|v| v.card()).collect();
    let parents: Vec<Vec<usize>> = net
        .variables
        .iter()
        .map(|v| {
            net.parents(&v.name)
                .iter()
                .map(|p| net.index(p).unwrap())
                .collect()
        })
        .collect();
    let q = net.index(query).unwrap();
    let mut out = vec![0.0; cards[q]];
    let mut a = vec![0usize; cards.len()];
    loop {
        let mut p = 1.0;
        for (i, v) in net.variables.iter().enumerate() {
            if let Some(&h) = evidence.hard.get(&v.name) {
                if a[i] != h {
                    p = 0.0;
                    break;
                }
            }
            let row = parents[i].iter().fold(0, |acc, &j| acc * cards[j] + a[j]);
            p *= tables[&v.name][row][a[i]];
            if let Some(l) = evidence.likelihoods.get(&v.name) {
                p *= l[a[i]];
            }
        }
        out[a[q]] += p;
        let mut k = cards.len();
        loop {
            if k == 0 {
                let z: f64 = out.iter().sum();
                return out.into_iter().map(|x| x / z).collect();
            }
            k -= 1;
            a[k] += 1;
            if a[k] < cards[k] {
                break;
            }
            a[k] = 0;
        }
    }
}

/// Hard evidence on about a quarter of the non-query variables and
/// likelihood vectors on another quarter (the query included, sometimes).
pub fn random_evidence(rng: &mut ChaCha8Rng, net: &NetworkSpec, query: &str) -> Evidence {
    let mut evidence = Evidence::new();
    let weights = |rng: &mut ChaCha8Rng, k: usize| {
        (0..k)
            .map(|_| rng.random_range(0.05..1.0))
            .collect::<Vec<f64>>()
    };
    for v in &net.variables {
        if v.name == query {
            if rng.random_bool(0.3) {
                evidence = evidence.likelihood(&v.name, weights(rng, v.card()));
            }
            continue;
        }
        match rng.random_range(0..4) {
            0 => evidence = evidence.observe(&v.name, rng.random_range(0..v.card())),
            1 => evidence = evidence.likelihood(&v.name, weights(rng, v.card())),
            _ => {}
        }
    }
    evidence
}
