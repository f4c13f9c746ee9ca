//! Early-fusion baseline: tabular features appended to the note embedding.

use ndarray::{concatenate, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use super::mlp::{fit_mlp, MlpFit, MlpTrainConfig};
use crate::data::PatientRecord;
use crate::error::{Error, Result};
use crate::model::NetworkSpec;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Column {
    /// `value == index` for a non-reference value of a categorical variable.
    Indicator { variable: String, index: usize },
    /// A count variable standardized with training statistics.
    Scaled {
        variable: String,
        mean: f64,
        std: f64,
    },
}

/// Encodes the tabular (non-symptom) variables: `K - 1` indicator columns
/// per categorical variable, one standardized column per count variable.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TabularEncoder {
    pub columns: Vec<Column>,
}

impl TabularEncoder {
    /// Scaling statistics come from `train` (population standard deviation;
    /// a constant column keeps scale 1).
    pub fn fit(net: &NetworkSpec, train: &[PatientRecord]) -> Result<Self> {
        if train.is_empty() {
            return Err(Error::EmptyData);
        }
        let mut columns = Vec::new();
        for v in net.tabular() {
            if v.is_count() {
                let values = crate::data::column(train, &v.name)?;
                let n = values.len() as f64;
                let mean = values.iter().map(|&x| x as f64).sum::<f64>() / n;
                let var = values
                    .iter()
                    .map(|&x| (x as f64 - mean).powi(2))
                    .sum::<f64>()
                    / n;
                let std = if var > 0.0 { var.sqrt() } else { 1.0 };
                columns.push(Column::Scaled {
                    variable: v.name.clone(),
                    mean,
                    std,
                });
            } else {
                for index in 1..v.card() {
                    columns.push(Column::Indicator {
                        variable: v.name.clone(),
                        index,
                    });
                }
            }
        }
        Ok(TabularEncoder { columns })
    }

    pub fn width(&self) -> usize {
        self.columns.len()
    }

    pub fn encode(&self, records: &[PatientRecord]) -> Result<Array2<f64>> {
        let mut out = Array2::zeros((records.len(), self.width()));
        for (r, rec) in records.iter().enumerate() {
            for (c, col) in self.columns.iter().enumerate() {
                let (variable, value) = match col {
                    Column::Indicator { variable, index } => {
                        let v = rec.value(variable);
                        (variable, v.map(|v| f64::from(u8::from(v == *index))))
                    }
                    Column::Scaled {
                        variable,
                        mean,
                        std,
                    } => (
                        variable,
                        rec.value(variable).map(|v| (v as f64 - mean) / std),
                    ),
                };
                out[[r, c]] = value.ok_or_else(|| {
                    Error::Format(format!("record `{}` has no value for `{variable}`", rec.id))
                })?;
            }
        }
        Ok(out)
    }

    /// Embedding columns followed by the encoded tabular columns.
    pub fn concat(
        &self,
        embeddings: ArrayView2<'_, f64>,
        records: &[PatientRecord],
    ) -> Result<Array2<f64>> {
        if embeddings.nrows() != records.len() {
            return Err(Error::LengthMismatch {
                left: embeddings.nrows(),
                right: records.len(),
            });
        }
        let tab = self.encode(records)?;
        Ok(concatenate(Axis(1), &[embeddings, tab.view()]).expect("row counts checked"))
    }
}

/// The concat classifier: same protocol as the text-only classifier on the
/// concatenated input.
pub fn train_concat_baseline(
    encoder: &TabularEncoder,
    embeddings: ArrayView2<'_, f64>,
    records: &[PatientRecord],
    symptom: &str,
    classes: usize,
    labels: &[usize],
    cfg: &MlpTrainConfig,
) -> Result<MlpFit> {
    let x = encoder.concat(embeddings, records)?;
    fit_mlp(symptom, classes, x.view(), labels, cfg)
}
