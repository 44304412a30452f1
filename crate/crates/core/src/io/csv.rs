use std::collections::HashMap;
use std::path::Path;

use crate::error::{Error, Result};
use crate::features::{ColumnKind, FeatureSchema, Row, RowTable, Value};

/// Loads a CSV whose header contains every feature and target column of
/// `schema`, in any order. Extra columns are ignored; empty cells become
/// missing values.
pub fn load_csv(path: impl AsRef<Path>, schema: &FeatureSchema) -> Result<RowTable> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let table = read_csv(file, schema, true)?;
    log::info!(
        "{}: {} rows, {} missing cells",
        path.display(),
        table.len(),
        table.missing_count()
    );
    Ok(table)
}

/// Like [`load_csv`] but target columns may be absent, as for rows that
/// only need predictions.
pub fn load_csv_features(path: impl AsRef<Path>, schema: &FeatureSchema) -> Result<RowTable> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_csv(file, schema, false)
}

pub fn read_csv(reader: impl std::io::Read, schema: &FeatureSchema, require_targets: bool) -> Result<RowTable> {
    schema.validate()?;
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header: HashMap<String, usize> = rdr
        .headers()?
        .iter()
        .enumerate()
        .map(|(i, h)| (h.to_owned(), i))
        .collect();

    let missing: Vec<&str> = schema
        .columns
        .iter()
        .map(|c| c.name.as_str())
        .chain(schema.targets.iter().map(String::as_str).filter(|_| require_targets))
        .filter(|name| !header.contains_key(*name))
        .collect();
    if !missing.is_empty() {
        return Err(Error::Schema(format!(
            "CSV header lacks column(s): {}",
            missing.join(", ")
        )));
    }
    let feature_pos: Vec<usize> = schema.columns.iter().map(|c| header[&c.name]).collect();
    let target_pos: Vec<Option<usize>> = schema.targets.iter().map(|t| header.get(t).copied()).collect();

    let parse_number = |cell: &str, row: usize, column: &str| -> Result<Option<f64>> {
        if cell.is_empty() {
            return Ok(None);
        }
        match cell.parse::<f64>() {
            Ok(v) if v.is_finite() => Ok(Some(v)),
            _ => Err(Error::Data {
                row,
                column: column.to_owned(),
                message: format!("cannot parse `{cell}` as a finite number"),
            }),
        }
    };

    let mut rows = Vec::new();
    for (id, record) in rdr.records().enumerate() {
        let record = record?;
        let cell = |pos: usize| record.get(pos).unwrap_or("");
        let features = schema
            .columns
            .iter()
            .zip(&feature_pos)
            .map(|(spec, &pos)| {
                let text = cell(pos);
                Ok(match spec.kind {
                    ColumnKind::Categorical if text.is_empty() => Value::Missing,
                    ColumnKind::Categorical => Value::Text(text.to_owned()),
                    ColumnKind::Numerical => parse_number(text, id, &spec.name)?.map_or(Value::Missing, Value::Number),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let targets = schema
            .targets
            .iter()
            .zip(&target_pos)
            .map(|(name, pos)| match pos {
                Some(p) => parse_number(cell(*p), id, name),
                None => Ok(None),
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push(Row { id, features, targets });
    }
    Ok(RowTable {
        feature_names: schema.columns.iter().map(|c| c.name.clone()).collect(),
        target_names: schema.targets.clone(),
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::ColumnSpec;

    fn schema() -> FeatureSchema {
        FeatureSchema::new(
            vec![ColumnSpec::categorical("dopant"), ColumnSpec::numerical("ph", 2)],
            vec!["rate".into()],
        )
        .unwrap()
    }

    #[test]
    fn empty_cells_are_missing() {
        let csv = "dopant,ph,rate\nAg,3,0.5\nC,,0.7\nN,7.5,0.1\n";
        let t = read_csv(csv.as_bytes(), &schema(), true).unwrap();
        assert_eq!(t.len(), 3);
        assert_eq!(t.missing_count(), 1);
        assert_eq!(t.rows[1].features[1], Value::Missing);
    }

    #[test]
    fn column_order_does_not_matter() {
        let a = read_csv("dopant,ph,rate\nAg,3,0.5\nC,4,0.7\n".as_bytes(), &schema(), true).unwrap();
        let b = read_csv(
            "rate,extra,ph,dopant\n0.5,x,3,Ag\n0.7,y,4,C\n".as_bytes(),
            &schema(),
            true,
        )
        .unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn missing_columns_are_listed() {
        let err = read_csv("dopant\nAg\n".as_bytes(), &schema(), true).unwrap_err();
        match err {
            Error::Schema(msg) => assert!(msg.contains("ph") && msg.contains("rate"), "{msg}"),
            other => panic!("{other:?}"),
        }
        assert!(read_csv("dopant,ph\nAg,1\n".as_bytes(), &schema(), false).is_ok());
    }

    #[test]
    fn unparseable_number_names_row_and_column() {
        let err = read_csv("dopant,ph,rate\nAg,3,1\nC,acidic,2\n".as_bytes(), &schema(), true).unwrap_err();
        assert!(matches!(err, Error::Data { row: 1, ref column, .. } if column == "ph"));
    }
}
