use crate::data::{column, PatientRecord};
use crate::error::{Error, Result};
use crate::model::{Cpd, NetworkSpec};

/// Smoothed conditional frequencies:
/// `(count + alpha) / (row_count + alpha * |domain|)`.
pub fn fit_table(
    data: &[PatientRecord],
    net: &NetworkSpec,
    child: &str,
    alpha: f64,
) -> Result<Cpd> {
    if data.is_empty() {
        return Err(Error::EmptyData);
    }
    if !alpha.is_finite() || alpha < 0.0 {
        return Err(Error::InvalidConfig(
            "smoothing alpha must be nonnegative".into(),
        ));
    }
    let card = net.variable(child)?.card();
    let parents = net.parent_specs(child)?;
    let cards: Vec<usize> = parents.iter().map(|p| p.card()).collect();
    let n_rows: usize = cards.iter().product();
    let y = column(data, child)?;
    let cols = parents
        .iter()
        .map(|p| column(data, &p.name))
        .collect::<Result<Vec<_>>>()?;

    let mut counts = vec![vec![0.0; card]; n_rows];
    for i in 0..data.len() {
        let row = cols
            .iter()
            .zip(&cards)
            .fold(0, |acc, (c, &k)| acc * k + c[i]);
        counts[row][y[i]] += 1.0;
    }
    let rows = counts
        .into_iter()
        .map(|c| {
            let total: f64 = c.iter().sum::<f64>() + alpha * card as f64;
            if total > 0.0 {
                c.iter().map(|x| (x + alpha) / total).collect()
            } else {
                vec![1.0 / card as f64; card]
            }
        })
        .collect();
    Ok(Cpd::Table { rows })
}
