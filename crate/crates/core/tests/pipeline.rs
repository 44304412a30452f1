mod common;

use std::path::PathBuf;

use eapcr_core::features::{
    fit_discretizer, fit_vocab, knn_impute, split_dataset, ColumnSpec, FeatureSchema, Row, SplitSpec, Value,
    UNKNOWN_INDEX,
};
use eapcr_core::io::load_csv;
use eapcr_core::FeatureEncoder;
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(name)
}

fn text_row(id: usize, values: &[&str]) -> Row {
    Row {
        id,
        features: values.iter().map(|v| Value::Text(v.to_string())).collect(),
        targets: vec![Some(0.0)],
    }
}

#[test]
fn vocabulary_is_lexicographic_and_order_free() {
    let schema = common::categorical_schema(2);
    let rows: Vec<Row> = ["Ag", "C", "Ag"]
        .iter()
        .enumerate()
        .map(|(i, v)| text_row(i, &[v, "x"]))
        .collect();
    let vocab = fit_vocab(&rows, &schema).unwrap();
    let col = vocab.column(0).unwrap();
    assert_eq!(col.index_of("Ag"), 1);
    assert_eq!(col.index_of("C"), 2);
    assert_eq!(col.index_of("Zn"), UNKNOWN_INDEX);

    let mut shuffled = rows.clone();
    shuffled.reverse();
    assert_eq!(fit_vocab(&shuffled, &schema).unwrap(), vocab);
}

#[test]
fn quantile_edges_examples() {
    let one_to_ten: Vec<f64> = (1..=10).map(f64::from).collect();
    let e = fit_discretizer(&one_to_ten, 2).unwrap();
    assert_eq!(e.edges(), &[5.5]);
    assert_eq!(e.bin(7.0), 1);
    assert_eq!(e.bin(5.5), 0, "value on an edge takes the lower bin");

    let one_to_nine: Vec<f64> = (1..=9).map(f64::from).collect();
    let e = fit_discretizer(&one_to_nine, 3).unwrap();
    assert!((e.edges()[0] - 11.0 / 3.0).abs() < 1e-12);
    assert!((e.edges()[1] - 19.0 / 3.0).abs() < 1e-12);
    let mut pops = [0; 3];
    for v in &one_to_nine {
        pops[e.bin(*v)] += 1;
    }
    assert_eq!(pops, [3, 3, 3]);

    let e = fit_discretizer(&[4.2; 6], 3).unwrap();
    assert_eq!(e.effective_bins(), 1);
    assert_eq!(e.bin(4.2), 0);
}

proptest! {
    #[test]
    fn bins_hold_equal_populations(
        mut values in prop::collection::hash_set(-1_000_000i64..1_000_000, 2..200),
        n_bins in 2usize..12,
    ) {
        let values: Vec<f64> = values.drain().map(|v| v as f64 / 7.0).collect();
        prop_assume!(n_bins <= values.len());
        let e = fit_discretizer(&values, n_bins).unwrap();
        let mut pops = vec![0usize; e.effective_bins()];
        for v in &values {
            pops[e.bin(*v)] += 1;
        }
        let (lo, hi) = (pops.iter().min().unwrap(), pops.iter().max().unwrap());
        prop_assert!(hi - lo <= 1, "{pops:?}");
    }
}

fn mixed_schema() -> FeatureSchema {
    FeatureSchema::new(
        vec![
            ColumnSpec::categorical("dopant"),
            ColumnSpec::numerical("ph", 3),
            ColumnSpec::numerical("temp", 2),
        ],
        vec!["y".into()],
    )
    .unwrap()
}

fn mixed_rows() -> Vec<Row> {
    let data = [
        ("Ag", 2.0, 400.0),
        ("C", 3.5, 450.0),
        ("N", 5.0, 500.0),
        ("Ag", 6.5, 550.0),
        ("Bi", 7.0, 600.0),
        ("C", 9.0, 650.0),
        ("N", 11.0, 700.0),
        ("Ag", 13.0, 900.0),
    ];
    data.iter()
        .enumerate()
        .map(|(id, (d, p, t))| Row {
            id,
            features: vec![Value::Text(d.to_string()), Value::Number(*p), Value::Number(*t)],
            targets: vec![Some(*p / 10.0)],
        })
        .collect()
}

#[test]
fn encoder_is_total_on_training_rows_and_deterministic() {
    let schema = mixed_schema();
    let rows = mixed_rows();
    let a = FeatureEncoder::fit(&rows, &schema).unwrap();
    let b = FeatureEncoder::fit(&rows, &schema).unwrap();
    assert_eq!(a, b);
    let xa = a.transform(&rows).unwrap();
    assert_eq!(xa, b.transform(&rows).unwrap());
    let cards = a.cardinalities();
    for x in &xa {
        assert!(x.indices.iter().zip(&cards).all(|(i, c)| i < c));
    }
}

#[test]
fn transforming_unseen_rows_leaves_the_encoder_untouched() {
    let schema = mixed_schema();
    let enc = FeatureEncoder::fit(&mixed_rows(), &schema).unwrap();
    let before = enc.clone();
    let unseen = Row {
        id: 99,
        features: vec![Value::Text("Zn".into()), Value::Number(-50.0), Value::Number(1e4)],
        targets: vec![None],
    };
    let x = enc.transform_row(&unseen).unwrap();
    assert_eq!(x.indices[0], UNKNOWN_INDEX);
    assert_eq!(x.indices[1], 0);
    assert_eq!(x.indices[2], 1);
    assert_eq!(enc, before);
}

#[test]
fn all_unknown_categoricals_encode_to_zero() {
    let schema = common::categorical_schema(3);
    let rows = vec![text_row(0, &["a", "b", "c"]), text_row(1, &["d", "e", "f"])];
    let enc = FeatureEncoder::fit(&rows, &schema).unwrap();
    let x = enc.transform_row(&text_row(2, &["x", "y", "z"])).unwrap();
    assert_eq!(x.indices, vec![0, 0, 0]);
}

fn numeric_schema(k: usize) -> FeatureSchema {
    let mut s = FeatureSchema::new(
        vec![
            ColumnSpec::numerical("a", 2),
            ColumnSpec::numerical("b", 2),
            ColumnSpec::numerical("c", 2),
        ],
        vec!["y".into()],
    )
    .unwrap();
    s.imputation = Some(eapcr_core::features::ImputationConfig { k });
    s
}

fn num_row(id: usize, v: [Option<f64>; 3]) -> Row {
    Row {
        id,
        features: v.iter().map(|x| x.map_or(Value::Missing, Value::Number)).collect(),
        targets: vec![Some(0.0)],
    }
}

#[test]
fn knn_examples() {
    let schema = numeric_schema(1);
    let rows = vec![
        num_row(0, [Some(1.0), None, Some(3.0)]),
        num_row(1, [Some(2.0), Some(8.0), Some(4.0)]),
    ];
    let filled = knn_impute(&rows, &schema, 1).unwrap();
    assert_eq!(filled[0].features[1], Value::Number(8.0));

    let rows = vec![
        num_row(0, [Some(0.0), None, Some(0.0)]),
        num_row(1, [Some(1.0), Some(4.0), Some(1.0)]),
        num_row(2, [Some(-1.0), Some(6.0), Some(-1.0)]),
        num_row(3, [Some(9.0), Some(100.0), Some(9.0)]),
    ];
    let filled = knn_impute(&rows, &schema, 2).unwrap();
    assert_eq!(filled[0].features[1], Value::Number(5.0));
}

/// Every pairwise distance computed from scratch; the k nearest complete
/// rows by (distance, row order) supply the mean.
fn brute_force_fill(rows: &[[Option<f64>; 3]], hole: (usize, usize), k: usize) -> f64 {
    let (r, c) = hole;
    let stats: Vec<(f64, f64)> = (0..3)
        .map(|col| {
            let v: Vec<f64> = rows.iter().filter_map(|row| row[col]).collect();
            let mean = v.iter().sum::<f64>() / v.len() as f64;
            let sd = (v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / v.len() as f64).sqrt();
            (mean, sd)
        })
        .collect();
    let mut dist = Vec::new();
    for (j, other) in rows.iter().enumerate() {
        if j == r || other[c].is_none() {
            continue;
        }
        let mut s = 0.0;
        for col in (0..3).filter(|&col| col != c) {
            let d = (rows[r][col].unwrap() - other[col].unwrap()) / stats[col].1;
            s += d * d;
        }
        dist.push((s.sqrt(), j));
    }
    dist.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    dist[..k].iter().map(|&(_, j)| rows[j][c].unwrap()).sum::<f64>() / k as f64
}

#[test]
fn knn_matches_brute_force_on_ten_rows() {
    let raw: [[Option<f64>; 3]; 10] = [
        [Some(1.2), Some(30.0), Some(0.5)],
        [Some(3.4), Some(28.0), Some(0.9)],
        [Some(2.2), Some(35.0), Some(0.1)],
        [Some(5.0), Some(22.0), Some(0.7)],
        [Some(2.9), None, Some(0.4)],
        [Some(4.1), Some(25.0), Some(0.3)],
        [Some(0.7), Some(40.0), Some(0.8)],
        [Some(3.0), Some(31.0), Some(0.45)],
        [Some(2.5), Some(27.0), Some(0.35)],
        [Some(6.3), Some(19.0), Some(0.2)],
    ];
    let rows: Vec<Row> = raw.iter().enumerate().map(|(i, v)| num_row(i, *v)).collect();
    let filled = knn_impute(&rows, &numeric_schema(3), 3).unwrap();
    let expect = brute_force_fill(&raw, (4, 1), 3);
    let got = filled[4].features[1].as_number().unwrap();
    assert!((got - expect).abs() < 1e-12, "{got} vs {expect}");
    // untouched cells stay put
    for (a, b) in rows.iter().zip(&filled).filter(|(r, _)| r.id != 4) {
        assert_eq!(a, b);
    }
}

#[test]
fn split_examples() {
    let parts = split_dataset(10, SplitSpec::Ratio(0.7), 3).unwrap();
    assert_eq!(parts.len(), 1);
    let p = &parts[0];
    assert_eq!((p.train.len(), p.test.len()), (7, 3));
    let mut all: Vec<usize> = p.train.iter().chain(&p.test).copied().collect();
    all.sort_unstable();
    assert_eq!(all, (0..10).collect::<Vec<_>>());

    let folds = split_dataset(10, SplitSpec::KFold(5), 3).unwrap();
    assert_eq!(folds.len(), 5);
    let mut tests: Vec<usize> = folds.iter().flat_map(|f| f.test.clone()).collect();
    assert!(folds.iter().all(|f| f.test.len() == 2 && f.train.len() == 8));
    tests.sort_unstable();
    assert_eq!(tests, (0..10).collect::<Vec<_>>());

    assert_eq!(split_dataset(10, SplitSpec::KFold(5), 3).unwrap(), folds);
    assert_ne!(split_dataset(10, SplitSpec::KFold(5), 4).unwrap(), folds);
}

#[test]
fn shuffled_rows_give_the_same_encoder() {
    let schema = mixed_schema();
    let rows = mixed_rows();
    let mut shuffled = rows.clone();
    shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(1));
    assert_eq!(
        FeatureEncoder::fit(&rows, &schema).unwrap(),
        FeatureEncoder::fit(&shuffled, &schema).unwrap()
    );
}

#[test]
fn photocatalysis_fixture_parses_with_nine_features() {
    let schema = FeatureSchema::load(fixture("photocatalysis.toml")).unwrap();
    assert_eq!(schema.n_features(), 9);
    let table = load_csv(fixture("photocatalysis_sample.csv"), &schema).unwrap();
    assert_eq!(table.len(), 24);
    assert_eq!(table.rows[0].features.len(), 9);
    let enc = FeatureEncoder::fit(&table.rows, &schema).unwrap();
    assert_eq!(enc.transform(&table.rows).unwrap().len(), 24);
}
