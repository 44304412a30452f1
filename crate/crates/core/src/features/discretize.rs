use serde::{Deserialize, Serialize};

use super::{ColumnKind, FeatureSchema, Row};
use crate::error::{Error, Result};

/// Interior equal-frequency edges of one numerical column.
///
/// A value `v` falls in bin `k` when `edges[k-1] < v <= edges[k]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BinEdges {
    requested_bins: usize,
    edges: Vec<f64>,
}

impl BinEdges {
    pub fn edges(&self) -> &[f64] {
        &self.edges
    }

    pub fn requested_bins(&self) -> usize {
        self.requested_bins
    }

    /// Bin count after duplicate edges collapsed.
    pub fn effective_bins(&self) -> usize {
        self.edges.len() + 1
    }

    pub fn bin(&self, value: f64) -> usize {
        self.edges.partition_point(|&e| e < value)
    }
}

/// Empirical quantile of sorted data with linear interpolation between
/// order statistics, at `numer / denom`.
fn quantile_sorted(sorted: &[f64], numer: usize, denom: usize) -> f64 {
    let scaled = numer * (sorted.len() - 1);
    let lo = scaled / denom;
    let rem = scaled % denom;
    if rem == 0 || lo + 1 >= sorted.len() {
        return sorted[lo];
    }
    let frac = rem as f64 / denom as f64;
    sorted[lo] + frac * (sorted[lo + 1] - sorted[lo])
}

/// Equal-frequency edges at the `k / n_bins` quantiles, `k = 1..n_bins-1`.
/// Repeated edges, and edges equal to the largest value, are dropped, so
/// the effective bin count can shrink.
pub fn fit_discretizer(values: &[f64], n_bins: usize) -> Result<BinEdges> {
    if n_bins == 0 {
        return Err(Error::Fit("n_bins must be positive".into()));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Fit("cannot discretize non-finite values".into()));
    }
    if values.len() < n_bins {
        return Err(Error::Fit(format!(
            "{} values are too few for {n_bins} bins",
            values.len()
        )));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut edges: Vec<f64> = (1..n_bins).map(|k| quantile_sorted(&sorted, k, n_bins)).collect();
    edges.dedup();
    // an edge at the maximum would open a bin no training value reaches
    let max = sorted[sorted.len() - 1];
    edges.retain(|&e| e < max);
    Ok(BinEdges {
        requested_bins: n_bins,
        edges,
    })
}

/// Per-column bin edges aligned with the schema; `None` for categoricals.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Discretizer {
    pub(crate) columns: Vec<Option<BinEdges>>,
}

impl Discretizer {
    /// Fits every numerical column on its non-missing values.
    pub fn fit(rows: &[Row], schema: &FeatureSchema) -> Result<Self> {
        let mut columns = Vec::with_capacity(schema.n_features());
        for (col, spec) in schema.columns.iter().enumerate() {
            if spec.kind != ColumnKind::Numerical {
                columns.push(None);
                continue;
            }
            let values: Vec<f64> = rows
                .iter()
                .filter_map(|r| r.features.get(col).and_then(|v| v.as_number()))
                .collect();
            let n_bins = spec.n_bins.unwrap_or(1);
            let edges =
                fit_discretizer(&values, n_bins).map_err(|e| Error::Fit(format!("column `{}`: {e}", spec.name)))?;
            if edges.effective_bins() < n_bins {
                log::warn!(
                    "column `{}`: {} of {} bins remain after collapsing duplicate edges",
                    spec.name,
                    edges.effective_bins(),
                    n_bins
                );
            }
            columns.push(Some(edges));
        }
        Ok(Self { columns })
    }

    pub fn column(&self, col: usize) -> Result<&BinEdges> {
        self.columns
            .get(col)
            .and_then(Option::as_ref)
            .ok_or_else(|| Error::Fit(format!("column {col} has no fitted bin edges")))
    }

    pub fn columns(&self) -> &[Option<BinEdges>] {
        &self.columns
    }
}
