//! Maximum-likelihood fitting of each CPD family from fully observed
//! training records. Every CPD is fitted independently.

mod logistic;
mod noisy_or;
mod poisson;
mod sgd;
mod table;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use logistic::{fit_logistic, LogisticObjective};
pub use noisy_or::{fit_noisy_or, NoisyOrObjective, CLAMP as NOISY_OR_CLAMP};
pub use poisson::{fit_truncated_poisson, TruncatedPoissonObjective};
pub use sgd::{ascend, RowObjective};
pub use table::fit_table;

use crate::data::PatientRecord;
use crate::error::{Error, Result};
use crate::model::{validate_network, Cpd, NetworkSpec};
use crate::seed::derive_seed;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    /// Additive smoothing for table CPDs.
    pub alpha: f64,
    pub seed: u64,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            learning_rate: 0.01,
            epochs: 100,
            batch_size: 50,
            alpha: 1.0,
            seed: 0,
        }
    }
}

impl FitConfig {
    /// Schedule by training size: more epochs and a larger step for small
    /// training sets.
    pub fn for_size(n: usize, seed: u64) -> Self {
        FitConfig {
            learning_rate: if n < 500 { 0.05 } else { 0.01 },
            epochs: (200_000 / n.max(1)).max(100),
            batch_size: 50,
            alpha: 1.0,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.learning_rate.is_finite()
            || self.learning_rate <= 0.0
            || self.epochs == 0
            || self.batch_size == 0
            || !self.alpha.is_finite()
            || self.alpha < 0.0
        {
            return Err(Error::InvalidConfig(format!(
                "bad fit configuration: {self:?}"
            )));
        }
        Ok(())
    }
}

/// Fits every CPD of `template` on `data`, keeping each variable's family
/// (and the truncated-Poisson split parent). Template parameters are
/// otherwise ignored.
pub fn fit_network(
    data: &[PatientRecord],
    template: &NetworkSpec,
    cfg: &FitConfig,
) -> Result<NetworkSpec> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::EmptyData);
    }
    if let Err(cycle) = template.topological_order() {
        return Err(Error::InvalidConfig(format!(
            "network has a cycle through {cycle:?}"
        )));
    }
    let fitted: Vec<(String, Cpd)> = template
        .variables
        .par_iter()
        .map(|v| {
            let family = template
                .cpds
                .get(&v.name)
                .ok_or_else(|| Error::InvalidConfig(format!("no cpd family for `{}`", v.name)))?;
            let var_cfg = FitConfig {
                seed: derive_seed(cfg.seed, &v.name),
                ..cfg.clone()
            };
            let cpd = match family {
                Cpd::Table { .. } => fit_table(data, template, &v.name, cfg.alpha)?,
                Cpd::NoisyOr { .. } => fit_noisy_or(data, template, &v.name, &var_cfg)?,
                Cpd::Logistic { .. } => fit_logistic(data, template, &v.name, &var_cfg)?,
                Cpd::TruncatedPoisson { split, .. } => {
                    fit_truncated_poisson(data, template, &v.name, split.as_deref(), &var_cfg)?
                }
            };
            Ok((v.name.clone(), cpd))
        })
        .collect::<Result<_>>()?;
    let net = NetworkSpec {
        variables: template.variables.clone(),
        edges: template.edges.clone(),
        cpds: fitted.into_iter().collect(),
    };
    validate_network(&net).map_err(Error::InvalidNetwork)?;
    Ok(net)
}

#[cfg(test)]
mod tests {
    use std::collections::BTreeMap;

    use super::*;
    use crate::model::{Role, VariableSpec};

    fn rec(values: &[(&str, usize)]) -> PatientRecord {
        PatientRecord::new(
            "r",
            values
                .iter()
                .map(|(k, v)| (k.to_string(), *v))
                .collect::<BTreeMap<_, _>>(),
        )
    }

    fn single(domain: &[&str]) -> NetworkSpec {
        NetworkSpec {
            variables: vec![VariableSpec::new("y", domain, Role::Symptom)],
            edges: vec![],
            cpds: [("y".to_string(), Cpd::Table { rows: vec![] })]
                .into_iter()
                .collect(),
        }
    }

    #[test]
    fn laplace_smoothing() {
        let data: Vec<_> = (0..10).map(|i| rec(&[("y", usize::from(i < 8))])).collect();
        let Cpd::Table { rows } = fit_table(&data, &single(&["no", "yes"]), "y", 1.0).unwrap()
        else {
            unreachable!()
        };
        assert!((rows[0][1] - 0.75).abs() < 1e-12);
    }

    #[test]
    fn empirical_frequency_without_smoothing() {
        let data: Vec<_> = [0, 0, 0, 1].iter().map(|&v| rec(&[("y", v)])).collect();
        let Cpd::Table { rows } = fit_table(&data, &single(&["no", "yes"]), "y", 0.0).unwrap()
        else {
            unreachable!()
        };
        assert_eq!(rows[0], vec![0.75, 0.25]);
    }

    #[test]
    fn unseen_parent_row_is_uniform() {
        let net = NetworkSpec {
            variables: vec![
                VariableSpec::new("x", &["no", "yes"], Role::Background),
                VariableSpec::new("y", &["none", "low", "high"], Role::Symptom),
            ],
            edges: vec![("x".into(), "y".into())],
            cpds: BTreeMap::new(),
        };
        let data: Vec<_> = (0..5).map(|i| rec(&[("x", 0), ("y", i % 3)])).collect();
        let Cpd::Table { rows } = fit_table(&data, &net, "y", 1.0).unwrap() else {
            unreachable!()
        };
        assert_eq!(rows[1], vec![1.0 / 3.0; 3]);
    }

    #[test]
    fn empty_data_rejected() {
        assert!(matches!(
            fit_table(&[], &single(&["no", "yes"]), "y", 1.0),
            Err(Error::EmptyData)
        ));
        assert!(matches!(
            fit_network(&[], &single(&["no", "yes"]), &FitConfig::default()),
            Err(Error::EmptyData)
        ));
    }

    #[test]
    fn schedule() {
        let small = FitConfig::for_size(100, 0);
        assert_eq!(small.epochs, 2000);
        assert_eq!(small.learning_rate, 0.05);
        let large = FitConfig::for_size(8000, 0);
        assert_eq!(large.epochs, 100);
        assert_eq!(large.learning_rate, 0.01);
        assert_eq!(large.batch_size, 50);
    }
}
