use std::collections::BTreeMap;

use bnfuse::data::sample_records;
use bnfuse::inference::{CompiledNetwork, Evidence};
use bnfuse::model::{Cpd, NetworkSpec};
use bnfuse::profile::{simsum_network, SYMPTOMS};
use bnfuse::Error;
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

mod common;
use common::{enumerate, random_evidence, random_network};

fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

#[test]
fn simsum_symptoms_match_enumeration() {
    let net = simsum_network();
    let compiled = CompiledNetwork::new(&net).unwrap();
    let records = sample_records(&net, 6, 31).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    for r in &records {
        let likelihoods: BTreeMap<String, Vec<f64>> = SYMPTOMS
            .iter()
            .map(|s| {
                let k = net.variable(s).unwrap().card();
                (
                    s.to_string(),
                    (0..k).map(|_| rng.random_range(0.01..1.0)).collect(),
                )
            })
            .collect();
        let post = compiled
            .symptom_posteriors(&r.tabular, Some(&likelihoods))
            .unwrap();
        let evidence = Evidence {
            hard: r.tabular.clone(),
            likelihoods: likelihoods.clone(),
        };
        for s in SYMPTOMS {
            let oracle = enumerate(&net, &evidence, s);
            assert!(max_diff(&post[s].probs, &oracle) < 1e-12, "{s}");
        }
    }
}

#[test]
fn partial_tabular_evidence() {
    let net = simsum_network();
    let compiled = CompiledNetwork::new(&net).unwrap();
    let tab = BTreeMap::from([("season".to_string(), 0), ("smoking".to_string(), 1)]);
    let post = compiled.symptom_posteriors(&tab, None).unwrap();
    let evidence = Evidence {
        hard: tab,
        likelihoods: BTreeMap::new(),
    };
    for s in SYMPTOMS {
        assert!(max_diff(&post[s].probs, &enumerate(&net, &evidence, s)) < 1e-12);
    }
}

#[test]
fn symptom_as_tabular_evidence_is_rejected() {
    let compiled = CompiledNetwork::new(&simsum_network()).unwrap();
    let tab = BTreeMap::from([("cough".to_string(), 1)]);
    assert!(matches!(
        compiled.symptom_posteriors(&tab, None),
        Err(Error::InvalidEvidence(_))
    ));
}

#[test]
fn cyclic_network_is_rejected() {
    let mut net = simsum_network();
    net.edges.push(("cough".into(), "pneumonia".into()));
    assert!(matches!(
        CompiledNetwork::new(&net),
        Err(Error::InvalidNetwork(_))
    ));
}

#[test]
fn wrong_likelihood_length() {
    let compiled = CompiledNetwork::new(&simsum_network()).unwrap();
    let ev = Evidence::new().likelihood("fever", vec![0.5, 0.5]);
    assert!(compiled.posterior(&ev, "pneumonia").is_err());
}

fn case(seed: u64) -> (NetworkSpec, Evidence, String, ChaCha8Rng) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let net = random_network(&mut rng, 8);
    let query = net.variables[rng.random_range(0..net.variables.len())]
        .name
        .clone();
    let evidence = random_evidence(&mut rng, &net, &query);
    (net, evidence, query, rng)
}

fn consistent(net: &NetworkSpec, evidence: &Evidence, query: &str) -> bool {
    enumerate(net, evidence, query)
        .iter()
        .all(|p| p.is_finite())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn posterior_matches_enumeration(seed in any::<u64>()) {
        let (net, evidence, query, _) = case(seed);
        prop_assume!(consistent(&net, &evidence, &query));
        let compiled = CompiledNetwork::new(&net).unwrap();
        let p = compiled.posterior(&evidence, &query).unwrap();
        prop_assert!((p.probs.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert!(max_diff(&p.probs, &enumerate(&net, &evidence, &query)) < 1e-9);
    }

    #[test]
    fn elimination_order_does_not_change_result(seed in any::<u64>()) {
        let (net, evidence, query, mut rng) = case(seed);
        prop_assume!(consistent(&net, &evidence, &query));
        let compiled = CompiledNetwork::new(&net).unwrap();
        let mut order = compiled.elimination_order(&query, &evidence).unwrap();
        let base = compiled.posterior_with_order(&evidence, &query, &order).unwrap();
        order.shuffle(&mut rng);
        let other = compiled.posterior_with_order(&evidence, &query, &order).unwrap();
        prop_assert!(max_diff(&base.probs, &other.probs) < 1e-12);
    }

    #[test]
    fn likelihood_scale_is_irrelevant(seed in any::<u64>(), scale in 0.01f64..100.0) {
        let (net, evidence, query, _) = case(seed);
        prop_assume!(consistent(&net, &evidence, &query));
        let compiled = CompiledNetwork::new(&net).unwrap();
        let mut scaled = evidence.clone();
        for w in scaled.likelihoods.values_mut() {
            w.iter_mut().for_each(|x| *x *= scale);
        }
        let a = compiled.posterior(&evidence, &query).unwrap();
        let b = compiled.posterior(&scaled, &query).unwrap();
        prop_assert!(max_diff(&a.probs, &b.probs) < 1e-12);
    }

    #[test]
    fn virtual_evidence_equals_observed_child(seed in any::<u64>()) {
        // A likelihood on X is the same as observing a new binary child of X
        // whose CPT column for the observed value is that likelihood.
        let (net, mut evidence, query, mut rng) = case(seed);
        let target = net.variables[rng.random_range(0..net.variables.len())].clone();
        prop_assume!(!evidence.hard.contains_key(&target.name) && !evidence.likelihoods.contains_key(&target.name));
        let weights: Vec<f64> = (0..target.card()).map(|_| rng.random_range(0.05..0.95)).collect();
        let mut extended = net.clone();
        extended.variables.push(bnfuse::model::VariableSpec::new("zz_obs", &["no", "yes"], bnfuse::model::Role::Background));
        extended.edges.push((target.name.clone(), "zz_obs".into()));
        extended.cpds.insert("zz_obs".into(), Cpd::Table { rows: weights.iter().map(|w| vec![1.0 - w, *w]).collect() });
        let with_child = evidence.clone().observe("zz_obs", 1);
        evidence = evidence.likelihood(&target.name, weights);
        prop_assume!(consistent(&net, &evidence, &query));
        let a = CompiledNetwork::new(&net).unwrap().posterior(&evidence, &query).unwrap();
        let b = CompiledNetwork::new(&extended).unwrap().posterior(&with_child, &query).unwrap();
        prop_assert!(max_diff(&a.probs, &b.probs) < 1e-12);
    }
}
