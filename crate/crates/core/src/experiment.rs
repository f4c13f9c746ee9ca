//! One experimental cell: fit on a training subsample, predict a test set
//! under one or more scenarios, score, and aggregate cells across seeds.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{labels, PatientRecord};
use crate::error::{Error, Result};
use crate::eval::{
    brier, confidence, subset_split, symptom_average_precision, wilcoxon_one_sided, Comparison,
    EvalReport, ReportEntry, Subset, Summary,
};
use crate::fusion::{fit_consistency, fuse_symptoms, run_variant, ConsistencyCpt, Variant};
use crate::inference::CompiledNetwork;
use crate::learning::{fit_network, FitConfig};
use crate::model::{DistVec, NetworkSpec};
use crate::seed::derive_seed;
use crate::text::{
    fit_mlp, train_concat_baseline, EmbeddingMatrix, MlpModel, MlpTrainConfig, TabularEncoder,
};

/// Where text-classifier probabilities come from.
#[derive(Clone, Debug)]
pub enum TextSource {
    /// Precomputed probabilities per symptom and record id.
    Channel(BTreeMap<String, BTreeMap<String, DistVec>>),
    /// Note embeddings; classifiers are trained per cell.
    Embeddings(EmbeddingMatrix),
}

impl TextSource {
    fn channel(&self, symptom: &str, records: &[PatientRecord]) -> Result<Vec<DistVec>> {
        let TextSource::Channel(map) = self else {
            return Err(Error::InvalidConfig("not a channel source".into()));
        };
        let by_id = map
            .get(symptom)
            .ok_or_else(|| Error::UnknownVariable(symptom.to_string()))?;
        records
            .iter()
            .map(|r| {
                by_id.get(&r.id).cloned().ok_or_else(|| {
                    Error::IdMisalignment(format!("no text probabilities for `{}`", r.id))
                })
            })
            .collect()
    }

    fn features(&self, records: &[PatientRecord]) -> Result<ndarray::Array2<f64>> {
        let TextSource::Embeddings(m) = self else {
            return Err(Error::InvalidConfig("not an embedding source".into()));
        };
        let ids: Vec<&str> = records.iter().map(|r| r.id.as_str()).collect();
        m.select(&ids)
    }
}

/// A test set as seen under one condition (for example, after masking).
#[derive(Clone, Debug)]
pub struct Scenario {
    pub name: String,
    pub test: Vec<PatientRecord>,
    pub text: TextSource,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellConfig {
    pub variants: Vec<Variant>,
    /// Use the template's parameters instead of fitting.
    pub ground_truth: bool,
    /// Overrides the size-based fitting schedule.
    pub fit: Option<FitConfig>,
    pub mlp: MlpTrainConfig,
}

impl Default for CellConfig {
    fn default() -> Self {
        CellConfig {
            variants: Variant::ALL.to_vec(),
            ground_truth: false,
            fit: None,
            mlp: MlpTrainConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConcatModels {
    pub encoder: TabularEncoder,
    pub models: BTreeMap<String, MlpModel>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainedCell {
    pub n: usize,
    pub seed: u64,
    pub network: NetworkSpec,
    pub consistency: Option<BTreeMap<String, ConsistencyCpt>>,
    pub consistency_virtual: Option<BTreeMap<String, ConsistencyCpt>>,
    pub text_models: Option<BTreeMap<String, MlpModel>>,
    pub concat: Option<ConcatModels>,
}

/// Per-variant, per-symptom predictions aligned with a scenario's records.
pub type Predictions = BTreeMap<Variant, BTreeMap<String, Vec<DistVec>>>;

fn tabs(records: &[PatientRecord]) -> Vec<BTreeMap<String, usize>> {
    records.iter().map(|r| r.tabular.clone()).collect()
}

pub fn train_cell(
    template: &NetworkSpec,
    train: &[PatientRecord],
    text: &TextSource,
    cfg: &CellConfig,
    n: usize,
    seed: u64,
) -> Result<TrainedCell> {
    if train.is_empty() {
        return Err(Error::EmptyData);
    }
    let wants = |v: Variant| cfg.variants.contains(&v);
    if wants(Variant::Concat) && matches!(text, TextSource::Channel(_)) {
        return Err(Error::InvalidConfig(
            "the concat baseline needs note embeddings".into(),
        ));
    }
    let network = if cfg.ground_truth {
        template.clone()
    } else {
        let fit_cfg = match &cfg.fit {
            Some(f) => FitConfig { seed, ..f.clone() },
            None => FitConfig::for_size(train.len(), seed),
        };
        fit_network(train, template, &fit_cfg)?
    };
    let symptoms = network.symptoms().into_iter().cloned().collect::<Vec<_>>();
    let train_labels: BTreeMap<String, Vec<usize>> = symptoms
        .iter()
        .map(|s| Ok((s.name.clone(), labels(train, &s.name)?)))
        .collect::<Result<_>>()?;
    let mlp_cfg = |tag: &str| MlpTrainConfig {
        seed: derive_seed(seed, tag),
        ..cfg.mlp.clone()
    };

    let needs_text = cfg
        .variants
        .iter()
        .any(|&v| v != Variant::BnOnly && v != Variant::Concat);
    let (text_models, oof) = match text {
        TextSource::Channel(_) => {
            let oof = symptoms
                .iter()
                .map(|s| Ok((s.name.clone(), text.channel(&s.name, train)?)))
                .collect::<Result<BTreeMap<_, _>>>()?;
            (None, oof)
        }
        TextSource::Embeddings(_) if needs_text => {
            let x = text.features(train)?;
            let fits = symptoms
                .par_iter()
                .map(|s| {
                    let fit = fit_mlp(
                        &s.name,
                        s.card(),
                        x.view(),
                        &train_labels[&s.name],
                        &mlp_cfg(&s.name),
                    )?;
                    Ok((s.name.clone(), fit))
                })
                .collect::<Result<Vec<_>>>()?;
            let mut models = BTreeMap::new();
            let mut oof = BTreeMap::new();
            for (name, fit) in fits {
                oof.insert(name.clone(), fit.out_of_fold);
                models.insert(name, fit.model);
            }
            (Some(models), oof)
        }
        TextSource::Embeddings(_) => (None, BTreeMap::new()),
    };

    let compiled = CompiledNetwork::new(&network)?;
    let train_tabs = tabs(train);
    let consistency = if wants(Variant::CBnText) {
        Some(fit_consistency(
            &compiled,
            &symptoms,
            &train_tabs,
            &oof,
            &train_labels,
            false,
        )?)
    } else {
        None
    };
    let consistency_virtual = if wants(Variant::VCBnText) {
        Some(fit_consistency(
            &compiled,
            &symptoms,
            &train_tabs,
            &oof,
            &train_labels,
            true,
        )?)
    } else {
        None
    };

    let concat = if wants(Variant::Concat) {
        let encoder = TabularEncoder::fit(&network, train)?;
        let x = text.features(train)?;
        let models = symptoms
            .par_iter()
            .map(|s| {
                let fit = train_concat_baseline(
                    &encoder,
                    x.view(),
                    train,
                    &s.name,
                    s.card(),
                    &train_labels[&s.name],
                    &mlp_cfg(&format!("concat/{}", s.name)),
                )?;
                Ok((s.name.clone(), fit.model))
            })
            .collect::<Result<BTreeMap<_, _>>>()?;
        Some(ConcatModels { encoder, models })
    } else {
        None
    };

    Ok(TrainedCell {
        n,
        seed,
        network,
        consistency,
        consistency_virtual,
        text_models,
        concat,
    })
}

fn test_text(cell: &TrainedCell, scenario: &Scenario) -> Result<BTreeMap<String, Vec<DistVec>>> {
    let symptoms = cell.network.symptom_names();
    match &scenario.text {
        TextSource::Channel(_) => symptoms
            .iter()
            .map(|s| Ok((s.clone(), scenario.text.channel(s, &scenario.test)?)))
            .collect(),
        TextSource::Embeddings(_) => {
            let models = cell
                .text_models
                .as_ref()
                .ok_or_else(|| Error::InvalidConfig("no text classifiers were trained".into()))?;
            let x = scenario.text.features(&scenario.test)?;
            symptoms
                .iter()
                .map(|s| {
                    let m = models
                        .get(s)
                        .ok_or_else(|| Error::UnknownVariable(s.clone()))?;
                    Ok((s.clone(), m.predict_proba(x.view())?))
                })
                .collect()
        }
    }
}

pub fn predict_cell(
    cell: &TrainedCell,
    scenario: &Scenario,
    variants: &[Variant],
) -> Result<Predictions> {
    let compiled = CompiledNetwork::new(&cell.network)?;
    let wants = |v: Variant| variants.contains(&v);
    let needs_text = variants
        .iter()
        .any(|&v| v != Variant::BnOnly && v != Variant::Concat);
    let text = if needs_text {
        test_text(cell, scenario)?
    } else {
        BTreeMap::new()
    };
    let per_patient: Vec<BTreeMap<Variant, BTreeMap<String, DistVec>>> = scenario
        .test
        .par_iter()
        .enumerate()
        .map(|(i, r)| {
            let t: BTreeMap<String, DistVec> = text
                .iter()
                .map(|(s, p)| (s.clone(), p[i].clone()))
                .collect();
            let mut out = BTreeMap::new();
            if wants(Variant::BnOnly) || wants(Variant::CBnText) {
                let bn = run_variant(Variant::BnOnly, &compiled, &r.tabular, &t, None)?;
                if wants(Variant::CBnText) {
                    let cpts = cell
                        .consistency
                        .as_ref()
                        .ok_or_else(|| Error::MissingCpt("c-bn-text".into()))?;
                    out.insert(Variant::CBnText, fuse_symptoms(&bn, &t, cpts)?);
                }
                out.insert(Variant::BnOnly, bn);
            }
            if wants(Variant::VBnText) || wants(Variant::VCBnText) {
                let vbn = run_variant(Variant::VBnText, &compiled, &r.tabular, &t, None)?;
                if wants(Variant::VCBnText) {
                    let cpts = cell
                        .consistency_virtual
                        .as_ref()
                        .ok_or_else(|| Error::MissingCpt("v-c-bn-text".into()))?;
                    out.insert(Variant::VCBnText, fuse_symptoms(&vbn, &t, cpts)?);
                }
                out.insert(Variant::VBnText, vbn);
            }
            if wants(Variant::TextOnly) {
                out.insert(Variant::TextOnly, t);
            }
            out.retain(|v, _| wants(*v));
            Ok(out)
        })
        .collect::<Result<_>>()?;

    let mut preds: Predictions = BTreeMap::new();
    for p in per_patient {
        for (v, by_symptom) in p {
            let slot = preds.entry(v).or_default();
            for (s, d) in by_symptom {
                slot.entry(s).or_default().push(d);
            }
        }
    }
    if wants(Variant::Concat) {
        let concat = cell
            .concat
            .as_ref()
            .ok_or_else(|| Error::InvalidConfig("no concat classifiers were trained".into()))?;
        let x = concat.encoder.concat(
            scenario.text.features(&scenario.test)?.view(),
            &scenario.test,
        )?;
        let slot = preds.entry(Variant::Concat).or_default();
        for (s, m) in &concat.models {
            slot.insert(s.clone(), m.predict_proba(x.view())?);
        }
    }
    Ok(preds)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellMetric {
    pub scenario: String,
    pub symptom: String,
    pub variant: Variant,
    pub subset: Option<Subset>,
    pub patients: usize,
    pub average_precision: Option<f64>,
    pub brier: f64,
    pub confidence: f64,
}

/// Overall metrics per symptom and variant, plus Brier and confidence on
/// the four mention subsets when every test record has mention labels.
pub fn score_cell(scenario: &Scenario, preds: &Predictions) -> Result<Vec<CellMetric>> {
    let mut out = Vec::new();
    let with_mentions = scenario.test.iter().all(|r| r.mentions.is_some());
    for (variant, by_symptom) in preds {
        for (symptom, probs) in by_symptom {
            let y = labels(&scenario.test, symptom)?;
            let ap = match symptom_average_precision(probs, &y) {
                Ok(v) => Some(v),
                Err(Error::SingleClassLabels) => None,
                Err(e) => return Err(e),
            };
            let mean_conf = |idx: &[usize]| {
                idx.iter().map(|&i| confidence(&probs[i])).sum::<f64>() / idx.len() as f64
            };
            let all: Vec<usize> = (0..probs.len()).collect();
            out.push(CellMetric {
                scenario: scenario.name.clone(),
                symptom: symptom.clone(),
                variant: *variant,
                subset: None,
                patients: probs.len(),
                average_precision: ap,
                brier: brier(probs, &y)?,
                confidence: mean_conf(&all),
            });
            if !with_mentions {
                continue;
            }
            let parts = subset_split(&scenario.test, symptom)?;
            for (subset, idx) in Subset::ALL.into_iter().zip(parts) {
                if idx.is_empty() {
                    continue;
                }
                let p: Vec<DistVec> = idx.iter().map(|&i| probs[i].clone()).collect();
                let yy: Vec<usize> = idx.iter().map(|&i| y[i]).collect();
                out.push(CellMetric {
                    scenario: scenario.name.clone(),
                    symptom: symptom.clone(),
                    variant: *variant,
                    subset: Some(subset),
                    patients: idx.len(),
                    average_precision: None,
                    brier: brier(&p, &yy)?,
                    confidence: mean_conf(&idx),
                });
            }
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub n: usize,
    pub seed: u64,
    pub metrics: Vec<CellMetric>,
}

const MIN_SEEDS_FOR_TEST: usize = 5;

type Key = (String, usize, String, Option<Subset>);

/// Averages cells over seeds and tests each variant against `baseline`
/// (one-sided Wilcoxon over seeds, paired by seed; needs at least 5 seeds).
pub fn aggregate(cells: &[CellResult], baseline: Variant, config_hash: &str) -> EvalReport {
    let mut seeds: Vec<u64> = cells.iter().map(|c| c.seed).collect();
    seeds.sort_unstable();
    seeds.dedup();
    // (key, variant) -> seed -> metric
    let mut grouped: BTreeMap<(Key, Variant), BTreeMap<u64, &CellMetric>> = BTreeMap::new();
    for c in cells {
        for m in &c.metrics {
            grouped
                .entry((
                    (m.scenario.clone(), c.n, m.symptom.clone(), m.subset),
                    m.variant,
                ))
                .or_default()
                .insert(c.seed, m);
        }
    }
    let mut entries = Vec::new();
    for ((key, variant), by_seed) in &grouped {
        let ms: Vec<&CellMetric> = by_seed.values().copied().collect();
        let aps: Option<Vec<f64>> = ms.iter().map(|m| m.average_precision).collect();
        entries.push(ReportEntry {
            scenario: key.0.clone(),
            n: key.1,
            symptom: key.2.clone(),
            variant: *variant,
            subset: key.3,
            patients: ms.iter().map(|m| m.patients as f64).sum::<f64>() / ms.len() as f64,
            average_precision: aps.map(Summary::from_values),
            brier: Summary::from_values(ms.iter().map(|m| m.brier).collect()),
            confidence: Some(Summary::from_values(
                ms.iter().map(|m| m.confidence).collect(),
            )),
        });
    }
    let mut comparisons = Vec::new();
    for ((key, variant), by_seed) in &grouped {
        if *variant == baseline {
            continue;
        }
        let Some(base) = grouped.get(&(key.clone(), baseline)) else {
            continue;
        };
        let paired: Vec<(&CellMetric, &CellMetric)> = by_seed
            .iter()
            .filter_map(|(s, m)| base.get(s).map(|b| (*m, *b)))
            .collect();
        if paired.len() < MIN_SEEDS_FOR_TEST {
            continue;
        }
        let brier_v: Vec<f64> = paired.iter().map(|(m, _)| m.brier).collect();
        let brier_b: Vec<f64> = paired.iter().map(|(_, b)| b.brier).collect();
        comparisons.push(Comparison {
            scenario: key.0.clone(),
            n: key.1,
            symptom: key.2.clone(),
            subset: key.3,
            metric: "brier".into(),
            variant: *variant,
            baseline,
            p_value: wilcoxon_one_sided(&brier_b, &brier_v).ok(),
        });
        let aps: Option<Vec<(f64, f64)>> = paired
            .iter()
            .map(|(m, b)| Some((m.average_precision?, b.average_precision?)))
            .collect();
        if let Some(aps) = aps {
            let (v, b): (Vec<f64>, Vec<f64>) = aps.into_iter().unzip();
            comparisons.push(Comparison {
                scenario: key.0.clone(),
                n: key.1,
                symptom: key.2.clone(),
                subset: key.3,
                metric: "average-precision".into(),
                variant: *variant,
                baseline,
                p_value: wilcoxon_one_sided(&v, &b).ok(),
            });
        }
    }
    EvalReport {
        config_hash: config_hash.to_string(),
        seeds,
        entries,
        comparisons,
    }
}
