//! Raw heterogeneous rows → one integer index per feature column.
//!
//! Categorical columns go through a per-column [`Vocabulary`]; numerical
//! columns are discretized at equal-frequency quantile edges
//! ([`Discretizer`]). Both are fitted on training rows only and are
//! immutable afterwards, so transforming test rows cannot leak into them.

mod discretize;
mod impute;
mod split;
mod vocab;

use std::borrow::Cow;
use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

pub use discretize::{fit_discretizer, BinEdges, Discretizer};
pub use impute::knn_impute;
pub use split::{split_dataset, Partition, SplitSpec};
pub use vocab::{fit_vocab, ColumnVocab, Vocabulary, UNKNOWN_INDEX};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColumnKind {
    Categorical,
    Numerical,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ColumnSpec {
    pub name: String,
    pub kind: ColumnKind,
    /// Equal-frequency bin count; numerical columns only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_bins: Option<usize>,
}

impl ColumnSpec {
    pub fn categorical(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            kind: ColumnKind::Categorical,
            n_bins: None,
        }
    }

    pub fn numerical(name: impl Into<String>, n_bins: usize) -> Self {
        Self {
            name: name.into(),
            kind: ColumnKind::Numerical,
            n_bins: Some(n_bins),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImputationConfig {
    /// Neighbours averaged per missing value.
    pub k: usize,
}

/// Per-dataset description of feature columns and regression targets.
///
/// Loaded from a TOML file:
///
/// ```toml
/// targets = ["rate"]
/// split = { ratio = 0.7 }      # optional default protocol
/// imputation = { k = 5 }       # optional, kNN fill of numerical gaps
///
/// [[columns]]
/// name = "Dopant"
/// kind = "categorical"
///
/// [[columns]]
/// name = "pH"
/// kind = "numerical"
/// n_bins = 10
/// ```
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureSchema {
    pub columns: Vec<ColumnSpec>,
    pub targets: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub imputation: Option<ImputationConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split: Option<SplitSpec>,
}

impl FeatureSchema {
    pub fn new(columns: Vec<ColumnSpec>, targets: Vec<String>) -> Result<Self> {
        let schema = Self {
            columns,
            targets,
            imputation: None,
            split: None,
        };
        schema.validate()?;
        Ok(schema)
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let schema: Self = toml::from_str(text)?;
        schema.validate()?;
        Ok(schema)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    /// Number of feature columns (N).
    pub fn n_features(&self) -> usize {
        self.columns.len()
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = HashSet::new();
        for c in &self.columns {
            if !seen.insert(c.name.as_str()) {
                return Err(Error::Schema(format!("duplicate column `{}`", c.name)));
            }
            match (c.kind, c.n_bins) {
                (ColumnKind::Numerical, None) => {
                    return Err(Error::Schema(format!("numerical column `{}` needs n_bins", c.name)))
                }
                (ColumnKind::Numerical, Some(0)) => {
                    return Err(Error::Schema(format!("column `{}`: n_bins must be positive", c.name)))
                }
                (ColumnKind::Categorical, Some(_)) => {
                    return Err(Error::Schema(format!(
                        "categorical column `{}` cannot have n_bins",
                        c.name
                    )))
                }
                _ => {}
            }
        }
        let mut seen_targets = HashSet::new();
        for t in &self.targets {
            if seen.contains(t.as_str()) {
                return Err(Error::Schema(format!("`{t}` is both a feature and a target column")));
            }
            if !seen_targets.insert(t.as_str()) {
                return Err(Error::Schema(format!("duplicate target `{t}`")));
            }
        }
        if self.columns.len() < 2 {
            return Err(Error::Schema(format!(
                "at least 2 feature columns are required, got {}",
                self.columns.len()
            )));
        }
        if let Some(imp) = &self.imputation {
            if imp.k == 0 {
                return Err(Error::Schema("imputation k must be positive".into()));
            }
        }
        Ok(())
    }

    /// Copy with every numerical column set to `n_bins`.
    pub fn with_n_bins(&self, n_bins: usize) -> Result<Self> {
        let mut out = self.clone();
        for c in &mut out.columns {
            if c.kind == ColumnKind::Numerical {
                c.n_bins = Some(n_bins);
            }
        }
        out.validate()?;
        Ok(out)
    }

    pub fn target_index(&self, name: &str) -> Result<usize> {
        self.targets
            .iter()
            .position(|t| t == name)
            .ok_or_else(|| Error::Schema(format!("unknown target `{name}`")))
    }
}

/// One raw cell.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Value {
    Text(String),
    Number(f64),
    Missing,
}

impl Value {
    pub fn is_missing(&self) -> bool {
        matches!(self, Value::Missing)
    }

    pub fn as_number(&self) -> Option<f64> {
        match self {
            Value::Number(v) => Some(*v),
            _ => None,
        }
    }

    /// Category label of the cell; numbers are rendered with `Display`.
    pub fn as_category(&self) -> Option<Cow<'_, str>> {
        match self {
            Value::Text(s) => Some(Cow::Borrowed(s)),
            Value::Number(v) => Some(Cow::Owned(v.to_string())),
            Value::Missing => None,
        }
    }
}

/// A raw data row: feature cells in schema order plus target values.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Row {
    /// Position of the row in its source table, used in diagnostics.
    pub id: usize,
    pub features: Vec<Value>,
    pub targets: Vec<Option<f64>>,
}

/// Typed rows of one dataset, columns ordered as in the schema.
#[derive(Clone, Debug, PartialEq)]
pub struct RowTable {
    pub feature_names: Vec<String>,
    pub target_names: Vec<String>,
    pub rows: Vec<Row>,
}

impl RowTable {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Number of empty feature or target cells.
    pub fn missing_count(&self) -> usize {
        self.rows
            .iter()
            .map(|r| {
                r.features.iter().filter(|v| v.is_missing()).count() + r.targets.iter().filter(|t| t.is_none()).count()
            })
            .sum()
    }

    /// Target values of column `target` for `rows`; a missing target is a
    /// data error.
    pub fn target_values(&self, target: usize, rows: &[usize]) -> Result<Vec<f64>> {
        rows.iter()
            .map(|&i| {
                let row = &self.rows[i];
                row.targets.get(target).copied().flatten().ok_or_else(|| Error::Data {
                    row: row.id,
                    column: self.target_names[target].clone(),
                    message: "missing target value".into(),
                })
            })
            .collect()
    }

    pub fn select(&self, indices: &[usize]) -> Vec<Row> {
        indices.iter().map(|&i| self.rows[i].clone()).collect()
    }
}

/// The model input X: one index per feature column, local to that column.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct EncodedRow {
    pub indices: Vec<usize>,
}

/// Encodes one row. Categorical cells map through the vocabulary (unseen
/// values to [`UNKNOWN_INDEX`]); numerical cells map to their bin.
pub fn transform_row(
    row: &Row,
    schema: &FeatureSchema,
    vocab: &Vocabulary,
    discretizer: &Discretizer,
) -> Result<EncodedRow> {
    if row.features.len() != schema.n_features() {
        return Err(Error::Dimension {
            op: "transform_row",
            lhs: vec![row.features.len()],
            rhs: vec![schema.n_features()],
        });
    }
    let mut indices = Vec::with_capacity(schema.n_features());
    for (col, (spec, value)) in schema.columns.iter().zip(&row.features).enumerate() {
        let missing = || Error::Data {
            row: row.id,
            column: spec.name.clone(),
            message: "missing value and imputation is disabled".into(),
        };
        let ix = match spec.kind {
            ColumnKind::Categorical => {
                let label = value.as_category().ok_or_else(missing)?;
                vocab.column(col)?.index_of(&label)
            }
            ColumnKind::Numerical => {
                let v = match value {
                    Value::Number(v) => *v,
                    Value::Missing => return Err(missing()),
                    Value::Text(t) => {
                        return Err(Error::Data {
                            row: row.id,
                            column: spec.name.clone(),
                            message: format!("expected a number, found `{t}`"),
                        })
                    }
                };
                discretizer.column(col)?.bin(v)
            }
        };
        indices.push(ix);
    }
    Ok(EncodedRow { indices })
}

/// Fitted vocabulary and discretizer for one schema.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureEncoder {
    schema: FeatureSchema,
    vocab: Vocabulary,
    discretizer: Discretizer,
}

impl FeatureEncoder {
    pub fn fit(rows: &[Row], schema: &FeatureSchema) -> Result<Self> {
        schema.validate()?;
        let vocab = fit_vocab(rows, schema)?;
        let discretizer = Discretizer::fit(rows, schema)?;
        Ok(Self {
            schema: schema.clone(),
            vocab,
            discretizer,
        })
    }

    pub fn schema(&self) -> &FeatureSchema {
        &self.schema
    }

    pub fn vocabulary(&self) -> &Vocabulary {
        &self.vocab
    }

    pub fn discretizer(&self) -> &Discretizer {
        &self.discretizer
    }

    pub fn transform_row(&self, row: &Row) -> Result<EncodedRow> {
        transform_row(row, &self.schema, &self.vocab, &self.discretizer)
    }

    pub fn transform(&self, rows: &[Row]) -> Result<Vec<EncodedRow>> {
        rows.iter().map(|r| self.transform_row(r)).collect()
    }

    /// Index-space size of each column: vocabulary size plus the unknown
    /// slot for categoricals, effective bin count for numericals.
    pub fn cardinalities(&self) -> Vec<usize> {
        self.schema
            .columns
            .iter()
            .enumerate()
            .map(|(i, c)| match c.kind {
                ColumnKind::Categorical => self.vocab.columns[i].as_ref().map_or(1, ColumnVocab::cardinality),
                ColumnKind::Numerical => self.discretizer.columns[i].as_ref().map_or(1, BinEdges::effective_bins),
            })
            .collect()
    }

    /// Numerical columns whose duplicate quantile edges collapsed, as
    /// `(name, requested, effective)`.
    pub fn collapsed_bins(&self) -> Vec<(String, usize, usize)> {
        self.schema
            .columns
            .iter()
            .zip(&self.discretizer.columns)
            .filter_map(|(c, e)| {
                let e = e.as_ref()?;
                (e.effective_bins() < e.requested_bins())
                    .then(|| (c.name.clone(), e.requested_bins(), e.effective_bins()))
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn schema() -> FeatureSchema {
        FeatureSchema::new(
            vec![ColumnSpec::categorical("dopant"), ColumnSpec::numerical("ph", 2)],
            vec!["rate".into()],
        )
        .unwrap()
    }

    fn row(id: usize, dopant: &str, ph: f64) -> Row {
        Row {
            id,
            features: vec![Value::Text(dopant.into()), Value::Number(ph)],
            targets: vec![Some(0.0)],
        }
    }

    fn fixture() -> Vec<Row> {
        (1..=10)
            .map(|i| row(i - 1, if i % 2 == 0 { "Ag" } else { "C" }, i as f64))
            .collect()
    }

    #[test]
    fn schema_rejects_bad_layouts() {
        let dup = FeatureSchema::new(
            vec![ColumnSpec::categorical("a"), ColumnSpec::categorical("a")],
            vec!["y".into()],
        );
        assert!(matches!(dup, Err(Error::Schema(_))));
        let overlap = FeatureSchema::new(
            vec![ColumnSpec::categorical("a"), ColumnSpec::categorical("y")],
            vec!["y".into()],
        );
        assert!(overlap.is_err());
        let single = FeatureSchema::new(vec![ColumnSpec::categorical("a")], vec!["y".into()]);
        assert!(single.is_err());
        let no_bins = FeatureSchema::from_toml_str(
            "targets=['y']\n[[columns]]\nname='a'\nkind='numerical'\n[[columns]]\nname='b'\nkind='categorical'\n",
        );
        assert!(no_bins.is_err());
    }

    #[test]
    fn schema_parses_from_toml() {
        let s = FeatureSchema::from_toml_str(
            r#"
targets = ["rate"]
split = { ratio = 0.7 }
imputation = { k = 3 }

[[columns]]
name = "Dopant"
kind = "categorical"

[[columns]]
name = "pH"
kind = "numerical"
n_bins = 10
"#,
        )
        .unwrap();
        assert_eq!(s.n_features(), 2);
        assert_eq!(s.columns[1].n_bins, Some(10));
        assert_eq!(s.split, Some(SplitSpec::Ratio(0.7)));
        assert_eq!(s.imputation, Some(ImputationConfig { k: 3 }));
    }

    #[test]
    fn value_at_edge_goes_to_lower_bin() {
        let enc = FeatureEncoder::fit(&fixture(), &schema()).unwrap();
        assert_eq!(enc.transform_row(&row(0, "Ag", 5.5)).unwrap().indices, vec![1, 0]);
        assert_eq!(enc.transform_row(&row(0, "Ag", 7.0)).unwrap().indices, vec![1, 1]);
    }

    #[test]
    fn unknown_categories_encode_to_zero() {
        let enc = FeatureEncoder::fit(&fixture(), &schema()).unwrap();
        assert_eq!(enc.transform_row(&row(0, "Zn", 1.0)).unwrap().indices[0], 0);
    }

    #[test]
    fn missing_value_names_row_and_column() {
        let enc = FeatureEncoder::fit(&fixture(), &schema()).unwrap();
        let mut r = row(17, "Ag", 1.0);
        r.features[1] = Value::Missing;
        match enc.transform_row(&r) {
            Err(Error::Data { row, column, .. }) => {
                assert_eq!(row, 17);
                assert_eq!(column, "ph");
            }
            other => panic!("expected data error, got {other:?}"),
        }
    }

    #[test]
    fn every_training_row_encodes() {
        let rows = fixture();
        let enc = FeatureEncoder::fit(&rows, &schema()).unwrap();
        let encoded = enc.transform(&rows).unwrap();
        let card = enc.cardinalities();
        assert_eq!(card, vec![3, 2]);
        for e in encoded {
            assert_eq!(e.indices.len(), 2);
            assert!(e.indices.iter().zip(&card).all(|(i, c)| i < c));
        }
    }

    #[test]
    fn transform_does_not_touch_fitted_state() {
        let enc = FeatureEncoder::fit(&fixture(), &schema()).unwrap();
        let before = enc.clone();
        let _ = enc.transform_row(&row(0, "Unseen", 1e9));
        assert_eq!(enc, before);
    }
}
