#![allow(dead_code)]

use eapcr_core::features::{ColumnSpec, EncodedRow, FeatureSchema, Row, RowTable, Value};
use eapcr_core::{model, EapcrParams, PermutationSpec, Result, Tape, Tensor, Var};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const FD_STEP: f64 = 1e-5;

/// ‖g − n‖ / max(‖g‖, ‖n‖); 0 when both vanish.
pub fn rel_err(analytic: &[f64], numeric: &[f64]) -> f64 {
    let diff = analytic
        .iter()
        .zip(numeric)
        .map(|(a, b)| (a - b).powi(2))
        .sum::<f64>()
        .sqrt();
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let scale = norm(analytic).max(norm(numeric));
    if scale == 0.0 {
        0.0
    } else {
        diff / scale
    }
}

/// Backward gradients and central differences of a scalar function of
/// `inputs`, one pair per input.
pub fn grad_pairs<F>(f: F, inputs: &[Tensor]) -> Vec<(Vec<f64>, Vec<f64>)>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let eval = |xs: &[Tensor]| -> f64 {
        let mut tape = Tape::new();
        let vars: Vec<Var> = xs.iter().map(|x| tape.constant(x.clone()).unwrap()).collect();
        let out = f(&mut tape, &vars).unwrap();
        tape.value(out).data()[0]
    };
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs
        .iter()
        .map(|x| tape.leaf(x.clone().with_requires_grad(true)).unwrap())
        .collect();
    let out = f(&mut tape, &vars).unwrap();
    let grads = tape.backward(out).unwrap();

    let mut pairs = Vec::new();
    for (k, var) in vars.iter().enumerate() {
        let analytic = grads.get_or_zeros(*var, &tape).into_data();
        let mut numeric = Vec::with_capacity(analytic.len());
        let mut xs = inputs.to_vec();
        for i in 0..inputs[k].numel() {
            let orig = inputs[k].data()[i];
            xs[k].data_mut()[i] = orig + FD_STEP;
            let up = eval(&xs);
            xs[k].data_mut()[i] = orig - FD_STEP;
            let down = eval(&xs);
            xs[k].data_mut()[i] = orig;
            numeric.push((up - down) / (2.0 * FD_STEP));
        }
        pairs.push((analytic, numeric));
    }
    pairs
}

/// Largest per-input relative error of [`grad_pairs`].
pub fn gradcheck<F>(f: F, inputs: &[Tensor]) -> f64
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    grad_pairs(f, inputs)
        .iter()
        .map(|(a, n)| rel_err(a, n))
        .fold(0.0, f64::max)
}

/// Central differences of the batch loss for every parameter entry.
pub fn numeric_gradients(
    params: &EapcrParams,
    spec: &PermutationSpec,
    rows: &[EncodedRow],
    y: &[f64],
) -> Vec<Vec<f64>> {
    let loss = |p: &EapcrParams| {
        let pred = model::predict(rows, p, spec).unwrap();
        pred.iter().zip(y).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / y.len() as f64
    };
    let h = FD_STEP;
    let mut p = params.clone();
    (0..params.tensors().len())
        .map(|k| {
            (0..params.tensors()[k].numel())
                .map(|i| {
                    let orig = params.tensors()[k].data()[i];
                    p.tensors_mut()[k].data_mut()[i] = orig + h;
                    let up = loss(&p);
                    p.tensors_mut()[k].data_mut()[i] = orig - h;
                    let down = loss(&p);
                    p.tensors_mut()[k].data_mut()[i] = orig;
                    (up - down) / (2.0 * h)
                })
                .collect()
        })
        .collect()
}

pub fn random_tensor(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
}

/// Random values whose magnitude stays at least `gap` away from zero.
pub fn away_from_zero(rng: &mut ChaCha8Rng, shape: &[usize], gap: f64) -> Tensor {
    let n = shape.iter().product();
    let data = (0..n)
        .map(|_| {
            let m = rng.gen_range(gap..1.0);
            if rng.gen_bool(0.5) {
                m
            } else {
                -m
            }
        })
        .collect();
    Tensor::new(shape.to_vec(), data).unwrap()
}

/// Reduces any tensor to a scalar through fixed pseudo-random weights so
/// every output element contributes its own gradient.
pub fn weighted_sum(tape: &mut Tape, x: Var) -> Result<Var> {
    let shape = tape.value(x).shape().to_vec();
    let n: usize = shape.iter().product();
    let w: Vec<f64> = (0..n).map(|i| ((i * 7 + 3) % 11) as f64 / 11.0 - 0.4).collect();
    let w = tape.constant(Tensor::new(shape, w)?)?;
    let prod = tape.mul(x, w)?;
    tape.sum(prod)
}

pub fn categorical_schema(n_cols: usize) -> FeatureSchema {
    FeatureSchema::new(
        (0..n_cols).map(|i| ColumnSpec::categorical(format!("c{i}"))).collect(),
        vec!["y".into()],
    )
    .unwrap()
}

pub fn rows_to_table(schema: &FeatureSchema, rows: Vec<Row>) -> RowTable {
    RowTable {
        feature_names: schema.columns.iter().map(|c| c.name.clone()).collect(),
        target_names: schema.targets.clone(),
        rows,
    }
}

/// Uniform random categorical table; `target` sees the integer level of
/// every column.
pub fn categorical_table(
    n_rows: usize,
    n_cols: usize,
    levels: usize,
    seed: u64,
    target: impl Fn(&[usize]) -> f64,
) -> (FeatureSchema, RowTable) {
    let schema = categorical_schema(n_cols);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rows = (0..n_rows)
        .map(|id| {
            let levels: Vec<usize> = (0..n_cols).map(|_| rng.gen_range(0..levels)).collect();
            Row {
                id,
                features: levels.iter().map(|l| Value::Text(format!("v{l}"))).collect(),
                targets: vec![Some(target(&levels))],
            }
        })
        .collect();
    let table = rows_to_table(&schema, rows);
    (schema, table)
}

/// Target is the XOR of the first two of four binary columns; the other
/// two are noise.
pub fn xor_table(n_rows: usize, seed: u64) -> (FeatureSchema, RowTable) {
    categorical_table(n_rows, 4, 2, seed, |l| (l[0] ^ l[1]) as f64)
}
