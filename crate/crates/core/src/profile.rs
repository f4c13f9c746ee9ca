//! The bundled SimSUM-style network: two respiratory diseases, five
//! symptoms, background conditions, season, antibiotics and days at home.
//!
//! The structure follows the expert DAG of the SimSUM dataset. The shipped
//! parameters are illustrative ground truth for synthetic experiments; they
//! are not the dataset's original values.

use crate::model::NetworkSpec;

pub const NETWORK_JSON: &str = include_str!("../assets/simsum_network.json");

pub const SYMPTOMS: [&str; 5] = ["dyspnea", "cough", "pain", "nasal", "fever"];

pub const TABULAR: [&str; 9] = [
    "asthma",
    "smoking",
    "copd",
    "hay_fever",
    "season",
    "pneumonia",
    "common_cold",
    "antibiotics",
    "days",
];

pub const EMBEDDING_DIM: usize = 768;

pub fn simsum_network() -> NetworkSpec {
    NetworkSpec::from_json(NETWORK_JSON).expect("bundled network is valid json")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{validate_network, Role};

    #[test]
    fn bundled_network_is_valid() {
        let net = simsum_network();
        validate_network(&net).unwrap();
        assert_eq!(net.symptom_names(), SYMPTOMS);
        let tab: Vec<&str> = net.tabular().iter().map(|v| v.name.as_str()).collect();
        let mut expected = TABULAR.to_vec();
        expected.sort();
        let mut got = tab.clone();
        got.sort();
        assert_eq!(got, expected);
    }

    #[test]
    fn symptom_domains() {
        let net = simsum_network();
        for s in ["dyspnea", "cough", "pain", "nasal"] {
            assert_eq!(net.variable(s).unwrap().domain, ["no", "yes"]);
        }
        assert_eq!(
            net.variable("fever").unwrap().domain,
            ["none", "low", "high"]
        );
        let days = net.variable("days").unwrap();
        assert_eq!(days.card(), 16);
        assert!(days.is_count());
        assert_eq!(days.role, Role::Outcome);
    }

    #[test]
    fn parent_sets_follow_factorization() {
        let net = simsum_network();
        assert_eq!(net.parents("pneumonia"), ["asthma", "copd", "season"]);
        assert_eq!(
            net.parents("pain"),
            ["cough", "pneumonia", "copd", "common_cold"]
        );
        assert_eq!(
            net.parents("days"),
            ["antibiotics", "dyspnea", "cough", "pain", "fever", "nasal"]
        );
    }
}
