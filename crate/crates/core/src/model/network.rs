use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::cpd::{cpd_as_table, Cpd};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Background,
    Disease,
    Symptom,
    Treatment,
    Outcome,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VariableSpec {
    pub name: String,
    pub domain: Vec<String>,
    pub role: Role,
}

impl VariableSpec {
    pub fn new(name: &str, domain: &[&str], role: Role) -> Self {
        VariableSpec {
            name: name.to_string(),
            domain: domain.iter().map(|s| s.to_string()).collect(),
            role,
        }
    }

    pub fn card(&self) -> usize {
        self.domain.len()
    }

    /// Case-insensitive label lookup.
    pub fn index_of(&self, label: &str) -> Option<usize> {
        let label = label.trim();
        self.domain
            .iter()
            .position(|d| d.eq_ignore_ascii_case(label))
    }

    /// Count-valued variables have labels `0, 1, ..., K-1` with K > 2.
    pub fn is_count(&self) -> bool {
        self.card() > 2
            && self
                .domain
                .iter()
                .enumerate()
                .all(|(i, l)| l.parse::<usize>() == Ok(i))
    }
}

/// A DAG over categorical variables with one CPD per variable. The parents
/// of a variable are its in-edges in declaration order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub variables: Vec<VariableSpec>,
    pub edges: Vec<(String, String)>,
    pub cpds: BTreeMap<String, Cpd>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum IssueKind {
    CycleDetected,
    MissingCpd,
    DomainMismatch,
    NonNormalizedRow,
    InvalidDomain,
    UnknownVariable,
    InvalidParameter,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValidationIssue {
    pub variable: String,
    pub kind: IssueKind,
    pub detail: String,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub issues: Vec<ValidationIssue>,
}

impl ValidationReport {
    fn push(&mut self, variable: &str, kind: IssueKind, detail: impl Into<String>) {
        self.issues.push(ValidationIssue {
            variable: variable.to_string(),
            kind,
            detail: detail.into(),
        });
    }

    pub fn has(&self, kind: IssueKind) -> bool {
        self.issues.iter().any(|i| i.kind == kind)
    }

    pub fn is_empty(&self) -> bool {
        self.issues.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for issue in &self.issues {
            writeln!(
                f,
                "  {}: {:?}: {}",
                issue.variable, issue.kind, issue.detail
            )?;
        }
        Ok(())
    }
}

impl NetworkSpec {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        NetworkSpec::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn index(&self, name: &str) -> Option<usize> {
        self.variables.iter().position(|v| v.name == name)
    }

    pub fn variable(&self, name: &str) -> Result<&VariableSpec> {
        self.variables
            .iter()
            .find(|v| v.name == name)
            .ok_or_else(|| Error::UnknownVariable(name.to_string()))
    }

    pub fn parents(&self, name: &str) -> Vec<&str> {
        self.edges
            .iter()
            .filter(|(_, c)| c == name)
            .map(|(p, _)| p.as_str())
            .collect()
    }

    pub fn parent_specs(&self, name: &str) -> Result<Vec<&VariableSpec>> {
        self.parents(name)
            .into_iter()
            .map(|p| self.variable(p))
            .collect()
    }

    pub fn symptoms(&self) -> Vec<&VariableSpec> {
        self.variables
            .iter()
            .filter(|v| v.role == Role::Symptom)
            .collect()
    }

    pub fn symptom_names(&self) -> Vec<String> {
        self.symptoms()
            .into_iter()
            .map(|v| v.name.clone())
            .collect()
    }

    /// Every non-symptom variable, in declaration order.
    pub fn tabular(&self) -> Vec<&VariableSpec> {
        self.variables
            .iter()
            .filter(|v| v.role != Role::Symptom)
            .collect()
    }

    /// Kahn's algorithm with declaration order as tie-break. Fails with the
    /// names of the variables left on a cycle.
    pub fn topological_order(&self) -> std::result::Result<Vec<String>, Vec<String>> {
        let n = self.variables.len();
        let mut indegree = vec![0usize; n];
        let mut children: Vec<Vec<usize>> = vec![Vec::new(); n];
        for (p, c) in &self.edges {
            if let (Some(pi), Some(ci)) = (self.index(p), self.index(c)) {
                indegree[ci] += 1;
                children[pi].push(ci);
            }
        }
        let mut done = vec![false; n];
        let mut order = Vec::with_capacity(n);
        loop {
            let next = (0..n).find(|&i| !done[i] && indegree[i] == 0);
            let Some(i) = next else { break };
            done[i] = true;
            order.push(self.variables[i].name.clone());
            for &c in &children[i] {
                indegree[c] -= 1;
            }
        }
        if order.len() == n {
            Ok(order)
        } else {
            Err((0..n)
                .filter(|&i| !done[i])
                .map(|i| self.variables[i].name.clone())
                .collect())
        }
    }

    /// Materializes every CPD as a table.
    pub fn tables(&self) -> Result<BTreeMap<String, Vec<Vec<f64>>>> {
        let mut out = BTreeMap::new();
        for v in &self.variables {
            let cpd = self
                .cpds
                .get(&v.name)
                .ok_or_else(|| Error::InvalidConfig(format!("no cpd for `{}`", v.name)))?;
            let parents = self.parent_specs(&v.name)?;
            out.insert(v.name.clone(), cpd_as_table(cpd, v, &parents)?);
        }
        Ok(out)
    }
}

/// Checks every structural and parametric invariant, collecting all
/// violations rather than stopping at the first.
pub fn validate_network(spec: &NetworkSpec) -> std::result::Result<(), ValidationReport> {
    let mut report = ValidationReport::default();

    for (i, v) in spec.variables.iter().enumerate() {
        if spec.variables[..i].iter().any(|o| o.name == v.name) {
            report.push(&v.name, IssueKind::InvalidDomain, "duplicate variable name");
        }
        if v.domain.len() < 2 {
            report.push(
                &v.name,
                IssueKind::InvalidDomain,
                "domain needs at least two labels",
            );
        }
        for (j, label) in v.domain.iter().enumerate() {
            if label.is_empty() {
                report.push(&v.name, IssueKind::InvalidDomain, "empty domain label");
            }
            if v.domain[..j].contains(label) {
                report.push(
                    &v.name,
                    IssueKind::InvalidDomain,
                    format!("duplicate label `{label}`"),
                );
            }
        }
    }

    for (p, c) in &spec.edges {
        for name in [p, c] {
            if spec.index(name).is_none() {
                report.push(
                    name,
                    IssueKind::UnknownVariable,
                    "edge endpoint is not declared",
                );
            }
        }
        if p == c {
            report.push(c, IssueKind::CycleDetected, "self-loop");
        }
    }
    if let Err(on_cycle) = spec.topological_order() {
        for name in on_cycle {
            report.push(
                &name,
                IssueKind::CycleDetected,
                "variable lies on or behind a cycle",
            );
        }
    }

    for name in spec.cpds.keys() {
        if spec.index(name).is_none() {
            report.push(
                name,
                IssueKind::UnknownVariable,
                "cpd for undeclared variable",
            );
        }
    }

    for v in &spec.variables {
        let Some(cpd) = spec.cpds.get(&v.name) else {
            report.push(&v.name, IssueKind::MissingCpd, "no cpd declared");
            continue;
        };
        let Ok(parents) = spec.parent_specs(&v.name) else {
            continue;
        };
        check_parameters(&mut report, v, cpd, &parents);
    }

    if report.is_empty() {
        Ok(())
    } else {
        Err(report)
    }
}

fn check_parameters(
    report: &mut ValidationReport,
    v: &VariableSpec,
    cpd: &Cpd,
    parents: &[&VariableSpec],
) {
    let in_unit = |p: f64| p.is_finite() && (0.0..1.0).contains(&p);
    match cpd {
        Cpd::NoisyOr { leak, lambdas } => {
            if !in_unit(*leak) || !lambdas.iter().all(|l| in_unit(*l)) {
                report.push(
                    &v.name,
                    IssueKind::InvalidParameter,
                    "noisy-or parameters must lie in [0, 1)",
                );
            }
        }
        Cpd::Logistic { intercept, weights } => {
            if !intercept.is_finite() || !weights.iter().all(|w| w.is_finite()) {
                report.push(
                    &v.name,
                    IssueKind::InvalidParameter,
                    "non-finite logistic parameter",
                );
            }
        }
        Cpd::TruncatedPoisson { models, .. } => {
            if !v.is_count() {
                report.push(
                    &v.name,
                    IssueKind::DomainMismatch,
                    "truncated poisson needs a 0..K count domain",
                );
            }
            if models
                .iter()
                .any(|m| !m.intercept.is_finite() || !m.weights.iter().all(|w| w.is_finite()))
            {
                report.push(
                    &v.name,
                    IssueKind::InvalidParameter,
                    "non-finite rate parameter",
                );
            }
        }
        Cpd::Table { .. } => {}
    }
    match cpd_as_table(cpd, v, parents) {
        Ok(rows) => {
            for (r, row) in rows.iter().enumerate() {
                let sum: f64 = row.iter().sum();
                if row.iter().any(|p| !p.is_finite() || *p < 0.0) || (sum - 1.0).abs() > 1e-9 {
                    report.push(
                        &v.name,
                        IssueKind::NonNormalizedRow,
                        format!("row {r} sums to {sum}"),
                    );
                }
            }
        }
        Err(Error::NoisyOrOnNonBinaryChild(_)) | Err(Error::NonBinaryChild(_)) => {
            report.push(
                &v.name,
                IssueKind::DomainMismatch,
                format!("{} needs a binary child", cpd.kind()),
            );
        }
        Err(e) => report.push(&v.name, IssueKind::DomainMismatch, e.to_string()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn chain(rows_a: Vec<Vec<f64>>) -> NetworkSpec {
        NetworkSpec {
            variables: vec![
                VariableSpec::new("B", &["no", "yes"], Role::Disease),
                VariableSpec::new("A", &["no", "yes"], Role::Symptom),
            ],
            edges: vec![("B".into(), "A".into())],
            cpds: [
                (
                    "B".to_string(),
                    Cpd::Table {
                        rows: vec![vec![0.5, 0.5]],
                    },
                ),
                ("A".to_string(), Cpd::Table { rows: rows_a }),
            ]
            .into_iter()
            .collect(),
        }
    }

    #[test]
    fn minimal_chain_is_valid() {
        assert!(validate_network(&chain(vec![vec![0.9, 0.1], vec![0.7, 0.3]])).is_ok());
    }

    #[test]
    fn two_cycle_detected() {
        let mut net = chain(vec![vec![0.9, 0.1], vec![0.7, 0.3]]);
        net.edges.push(("A".into(), "B".into()));
        let report = validate_network(&net).unwrap_err();
        assert!(report.has(IssueKind::CycleDetected));
        assert!(report.issues.iter().any(|i| i.variable == "A"));
        assert!(report.issues.iter().any(|i| i.variable == "B"));
    }

    #[test]
    fn non_normalized_row_detected() {
        let report = validate_network(&chain(vec![vec![0.8, 0.3], vec![0.7, 0.3]])).unwrap_err();
        assert!(report.has(IssueKind::NonNormalizedRow));
        assert_eq!(report.issues[0].variable, "A");
    }

    #[test]
    fn missing_cpd_and_shape_mismatch() {
        let mut net = chain(vec![vec![0.9, 0.1]]);
        net.cpds.remove("B");
        let report = validate_network(&net).unwrap_err();
        assert!(report.has(IssueKind::MissingCpd));
        assert!(report.has(IssueKind::DomainMismatch));
    }

    #[test]
    fn json_roundtrip() {
        let net = chain(vec![vec![0.9, 0.1], vec![0.7, 0.3]]);
        let back = NetworkSpec::from_json(&net.to_json().unwrap()).unwrap();
        assert_eq!(back, net);
    }

    #[test]
    fn count_domain_detection() {
        let labels: Vec<String> = (0..16).map(|k| k.to_string()).collect();
        let days = VariableSpec {
            name: "days".into(),
            domain: labels,
            role: Role::Outcome,
        };
        assert!(days.is_count());
        assert!(!VariableSpec::new("x", &["0", "1"], Role::Outcome).is_count());
    }
}
