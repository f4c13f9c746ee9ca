use std::collections::BTreeSet;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::Subset;
use crate::error::Result;
use crate::fusion::Variant;

/// Mean and sample standard deviation over seeds, with the per-seed values.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    pub std: f64,
    pub values: Vec<f64>,
}

impl Summary {
    pub fn from_values(values: Vec<f64>) -> Summary {
        let n = values.len() as f64;
        let mean = if values.is_empty() {
            f64::NAN
        } else {
            values.iter().sum::<f64>() / n
        };
        let std = if values.len() < 2 {
            0.0
        } else {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        };
        Summary { mean, std, values }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportEntry {
    pub scenario: String,
    pub n: usize,
    pub symptom: String,
    pub variant: Variant,
    pub subset: Option<Subset>,
    /// Mean number of test patients per seed.
    pub patients: f64,
    pub average_precision: Option<Summary>,
    pub brier: Summary,
    pub confidence: Option<Summary>,
}

/// One-sided Wilcoxon test that `variant` beats `baseline` on `metric`
/// across seeds (lower Brier, higher average precision).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub scenario: String,
    pub n: usize,
    pub symptom: String,
    pub subset: Option<Subset>,
    pub metric: String,
    pub variant: Variant,
    pub baseline: Variant,
    /// `None` when every paired difference is zero.
    pub p_value: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub config_hash: String,
    pub seeds: Vec<u64>,
    pub entries: Vec<ReportEntry>,
    pub comparisons: Vec<Comparison>,
}

fn subset_name(s: Option<Subset>) -> &'static str {
    s.map_or("all", Subset::name)
}

impl EvalReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    fn p_value(&self, e: &ReportEntry, metric: &str) -> Option<f64> {
        self.comparisons
            .iter()
            .find(|c| {
                c.scenario == e.scenario
                    && c.n == e.n
                    && c.symptom == e.symptom
                    && c.subset == e.subset
                    && c.metric == metric
                    && c.variant == e.variant
            })
            .and_then(|c| c.p_value)
    }

    /// Aligned text tables: one block per scenario, subset, symptom and
    /// metric, with variants as rows and training sizes as columns. Cells
    /// are `mean (std)`; `*` marks p < 0.05 against the baseline.
    pub fn to_table(&self) -> String {
        let sizes: BTreeSet<usize> = self.entries.iter().map(|e| e.n).collect();
        let mut blocks: Vec<(String, Option<Subset>, String)> = Vec::new();
        for e in &self.entries {
            let key = (e.scenario.clone(), e.subset, e.symptom.clone());
            if !blocks.contains(&key) {
                blocks.push(key);
            }
        }
        let mut out = String::new();
        for (scenario, subset, symptom) in blocks {
            for metric in ["average-precision", "brier"] {
                let rows: Vec<&ReportEntry> = self
                    .entries
                    .iter()
                    .filter(|e| {
                        e.scenario == scenario && e.subset == subset && e.symptom == symptom
                    })
                    .collect();
                if metric == "average-precision"
                    && rows.iter().all(|e| e.average_precision.is_none())
                {
                    continue;
                }
                let _ = writeln!(
                    out,
                    "[{scenario}] {symptom} / {} / {metric}",
                    subset_name(subset)
                );
                let _ = write!(out, "{:<14}", "variant");
                for n in &sizes {
                    let _ = write!(out, "{:>18}", format!("n={n}"));
                }
                out.push('\n');
                let mut variants: Vec<Variant> = rows.iter().map(|e| e.variant).collect();
                variants.sort();
                variants.dedup();
                for v in variants {
                    let _ = write!(out, "{:<14}", v.name());
                    for n in &sizes {
                        let cell =
                            rows.iter()
                                .find(|e| e.variant == v && e.n == *n)
                                .and_then(|e| {
                                    let s = if metric == "brier" {
                                        Some(&e.brier)
                                    } else {
                                        e.average_precision.as_ref()
                                    }?;
                                    let star = match self.p_value(e, metric) {
                                        Some(p) if p < 0.05 => "*",
                                        _ => "",
                                    };
                                    Some(format!("{:.3} ({:.3}){star}", s.mean, s.std))
                                });
                        let _ = write!(out, "{:>18}", cell.unwrap_or_else(|| "-".into()));
                    }
                    out.push('\n');
                }
                out.push('\n');
            }
        }
        out
    }

    /// Long-format CSV: one row per entry and metric.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record([
            "scenario", "n", "symptom", "variant", "subset", "metric", "mean", "std", "seeds",
        ])?;
        for e in &self.entries {
            let metrics = [
                ("average-precision", e.average_precision.as_ref()),
                ("brier", Some(&e.brier)),
                ("confidence", e.confidence.as_ref()),
            ];
            for (name, s) in metrics {
                if let Some(s) = s {
                    w.write_record([
                        e.scenario.clone(),
                        e.n.to_string(),
                        e.symptom.clone(),
                        e.variant.to_string(),
                        subset_name(e.subset).to_string(),
                        name.to_string(),
                        s.mean.to_string(),
                        s.std.to_string(),
                        s.values.len().to_string(),
                    ])?;
                }
            }
        }
        let bytes = w
            .into_inner()
            .map_err(|e| crate::Error::Format(e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| crate::Error::Format(e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn summary_statistics() {
        let s = Summary::from_values(vec![1.0, 2.0, 3.0]);
        assert_eq!(s.mean, 2.0);
        assert!((s.std - 1.0).abs() < 1e-12);
        assert_eq!(Summary::from_values(vec![4.0]).std, 0.0);
    }

    #[test]
    fn table_and_csv_shapes() {
        let entry = |variant, n| ReportEntry {
            scenario: "original".into(),
            n,
            symptom: "cough".into(),
            variant,
            subset: None,
            patients: 10.0,
            average_precision: Some(Summary::from_values(vec![0.8, 0.9])),
            brier: Summary::from_values(vec![0.1, 0.2]),
            confidence: None,
        };
        let report = EvalReport {
            config_hash: "abc".into(),
            seeds: vec![0, 1],
            entries: vec![
                entry(Variant::BnOnly, 100),
                entry(Variant::TextOnly, 100),
                entry(Variant::BnOnly, 200),
            ],
            comparisons: vec![],
        };
        let table = report.to_table();
        assert!(table.contains("n=100") && table.contains("n=200"));
        assert!(table.contains("text-only"));
        let csv = report.to_csv().unwrap();
        assert_eq!(csv.lines().count(), 1 + 3 * 2);
    }
}
