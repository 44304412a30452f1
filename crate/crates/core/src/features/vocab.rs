use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{ColumnKind, FeatureSchema, Row};
use crate::error::{Error, Result};

/// Index reserved for values not seen while fitting.
pub const UNKNOWN_INDEX: usize = 0;

/// String → index dictionary of one categorical column. Observed values get
/// contiguous indices from 1 in lexicographic order.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnVocab {
    index: BTreeMap<String, usize>,
    counts: BTreeMap<String, usize>,
}

impl ColumnVocab {
    pub fn from_values<'a>(values: impl IntoIterator<Item = &'a str>) -> Self {
        let mut counts: BTreeMap<String, usize> = BTreeMap::new();
        for v in values {
            *counts.entry(v.to_owned()).or_default() += 1;
        }
        let index = counts.keys().enumerate().map(|(i, k)| (k.clone(), i + 1)).collect();
        Self { index, counts }
    }

    pub fn index_of(&self, value: &str) -> usize {
        self.index.get(value).copied().unwrap_or(UNKNOWN_INDEX)
    }

    /// Observed values, excluding the unknown slot.
    pub fn len(&self) -> usize {
        self.index.len()
    }

    pub fn is_empty(&self) -> bool {
        self.index.is_empty()
    }

    /// Size of the column's index space including the unknown slot.
    pub fn cardinality(&self) -> usize {
        self.index.len() + 1
    }

    /// How often each value appeared in the fitting rows.
    pub fn counts(&self) -> &BTreeMap<String, usize> {
        &self.counts
    }
}

/// Per-column dictionaries, aligned with the schema; `None` for numerical
/// columns.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vocabulary {
    pub(crate) columns: Vec<Option<ColumnVocab>>,
}

impl Vocabulary {
    pub fn column(&self, col: usize) -> Result<&ColumnVocab> {
        self.columns
            .get(col)
            .and_then(Option::as_ref)
            .ok_or_else(|| Error::Fit(format!("column {col} has no fitted vocabulary")))
    }

    pub fn columns(&self) -> &[Option<ColumnVocab>] {
        &self.columns
    }
}

/// Fits one dictionary per categorical column. Missing cells are skipped.
pub fn fit_vocab(rows: &[Row], schema: &FeatureSchema) -> Result<Vocabulary> {
    if rows.is_empty() {
        return Err(Error::Fit("cannot fit a vocabulary on zero rows".into()));
    }
    let columns = schema
        .columns
        .iter()
        .enumerate()
        .map(|(col, spec)| {
            (spec.kind == ColumnKind::Categorical).then(|| {
                let labels: Vec<_> = rows
                    .iter()
                    .filter_map(|r| r.features.get(col).and_then(|v| v.as_category()))
                    .collect();
                ColumnVocab::from_values(labels.iter().map(|s| s.as_ref()))
            })
        })
        .collect();
    Ok(Vocabulary { columns })
}
