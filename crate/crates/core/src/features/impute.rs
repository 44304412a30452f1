use super::{ColumnKind, FeatureSchema, Row, Value};
use crate::error::{Error, Result};

/// Fills missing numerical cells with the mean of the `k` nearest rows.
///
/// Distance between a row and a candidate is Euclidean over the z-scored
/// numerical columns the row has present. Candidates must have every one of
/// those columns plus the one being filled. Equal distances keep row order.
/// Neighbours are always looked up in the original, unfilled rows.
pub fn knn_impute(rows: &[Row], schema: &FeatureSchema, k: usize) -> Result<Vec<Row>> {
    if k == 0 {
        return Err(Error::Imputation("k must be positive".into()));
    }
    let numeric: Vec<usize> = schema
        .columns
        .iter()
        .enumerate()
        .filter(|(_, c)| c.kind == ColumnKind::Numerical)
        .map(|(i, _)| i)
        .collect();
    let value = |r: &Row, col: usize| r.features.get(col).and_then(Value::as_number);

    // z-score parameters over the non-missing values of each column
    let mut scale = vec![(0.0, 1.0); schema.n_features()];
    for &col in &numeric {
        let vals: Vec<f64> = rows.iter().filter_map(|r| value(r, col)).collect();
        if vals.is_empty() {
            continue;
        }
        let mean = vals.iter().sum::<f64>() / vals.len() as f64;
        let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / vals.len() as f64;
        let sd = var.sqrt();
        scale[col] = (mean, if sd > 0.0 { sd } else { 1.0 });
    }

    let mut out = rows.to_vec();
    for (ri, row) in rows.iter().enumerate() {
        let missing: Vec<usize> = numeric
            .iter()
            .copied()
            .filter(|&c| row.features[c].is_missing())
            .collect();
        if missing.is_empty() {
            continue;
        }
        let present: Vec<usize> = numeric.iter().copied().filter(|c| !missing.contains(c)).collect();
        for &target_col in &missing {
            let mut candidates: Vec<(f64, usize)> = rows
                .iter()
                .enumerate()
                .filter(|&(ci, _)| ci != ri)
                .filter_map(|(ci, cand)| {
                    value(cand, target_col)?;
                    let mut d2 = 0.0;
                    for &c in &present {
                        let (_, sd) = scale[c];
                        let diff = (value(row, c)? - value(cand, c)?) / sd;
                        d2 += diff * diff;
                    }
                    Some((d2.sqrt(), ci))
                })
                .collect();
            if candidates.is_empty() {
                return Err(Error::Imputation(format!(
                    "row {}: no complete neighbour rows for column `{}`",
                    row.id, schema.columns[target_col].name
                )));
            }
            if candidates.len() < k {
                return Err(Error::Imputation(format!(
                    "row {}: only {} complete neighbour rows for column `{}`, need {k}",
                    row.id,
                    candidates.len(),
                    schema.columns[target_col].name
                )));
            }
            candidates.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            let fill = candidates[..k]
                .iter()
                .map(|&(_, ci)| value(&rows[ci], target_col).expect("filtered above"))
                .sum::<f64>()
                / k as f64;
            out[ri].features[target_col] = Value::Number(fill);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::ColumnSpec;

    fn schema() -> FeatureSchema {
        FeatureSchema::new(
            vec![
                ColumnSpec::numerical("a", 2),
                ColumnSpec::numerical("b", 2),
                ColumnSpec::categorical("c"),
            ],
            vec!["y".into()],
        )
        .unwrap()
    }

    fn row(id: usize, a: Option<f64>, b: Option<f64>) -> Row {
        let num = |v: Option<f64>| v.map_or(Value::Missing, Value::Number);
        Row {
            id,
            features: vec![num(a), num(b), Value::Text("x".into())],
            targets: vec![Some(0.0)],
        }
    }

    #[test]
    fn single_neighbour_is_copied() {
        let rows = vec![row(0, Some(1.0), None), row(1, Some(2.0), Some(9.0))];
        let out = knn_impute(&rows, &schema(), 1).unwrap();
        assert_eq!(out[0].features[1], Value::Number(9.0));
        assert_eq!(out[1], rows[1]);
    }

    #[test]
    fn two_neighbours_are_averaged() {
        let rows = vec![
            row(0, Some(0.0), None),
            row(1, Some(1.0), Some(4.0)),
            row(2, Some(-1.0), Some(6.0)),
            row(3, Some(50.0), Some(100.0)),
        ];
        let out = knn_impute(&rows, &schema(), 2).unwrap();
        assert_eq!(out[0].features[1], Value::Number(5.0));
    }

    #[test]
    fn no_neighbours_is_an_error() {
        let rows = vec![row(0, Some(1.0), None), row(1, Some(2.0), None)];
        assert!(matches!(knn_impute(&rows, &schema(), 1), Err(Error::Imputation(_))));
    }

    #[test]
    fn distance_ties_prefer_earlier_rows() {
        let rows = vec![
            row(0, Some(0.0), None),
            row(1, Some(1.0), Some(10.0)),
            row(2, Some(-1.0), Some(20.0)),
        ];
        let out = knn_impute(&rows, &schema(), 1).unwrap();
        assert_eq!(out[0].features[1], Value::Number(10.0));
    }
}
