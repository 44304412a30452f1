use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::EncodedRow;

/// Closed-form ridge regression on one-hot encoded feature indices with an
/// unpenalized intercept.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RidgeModel {
    cardinalities: Vec<usize>,
    lambda: f64,
    /// Intercept first, then one weight per (column, index) slot.
    weights: Vec<f64>,
}

impl RidgeModel {
    pub fn fit(rows: &[EncodedRow], cardinalities: &[usize], y: &[f64], lambda: f64) -> Result<Self> {
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(Error::Config(format!("ridge λ must be >= 0, got {lambda}")));
        }
        if rows.is_empty() || rows.len() != y.len() {
            return Err(Error::Dimension {
                op: "ridge_fit",
                lhs: vec![rows.len()],
                rhs: vec![y.len()],
            });
        }
        let dim = 1 + cardinalities.iter().sum::<usize>();
        let mut gram = vec![0.0; dim * dim];
        let mut rhs = vec![0.0; dim];
        for (row, &target) in rows.iter().zip(y) {
            let active = active_columns(row, cardinalities)?;
            for &i in &active {
                rhs[i] += target;
                for &j in &active {
                    gram[i * dim + j] += 1.0;
                }
            }
        }
        for i in 1..dim {
            gram[i * dim + i] += lambda;
        }
        let weights = solve_spd(&mut gram, &rhs, dim).map_err(|e| match e {
            Error::Solver(msg) if lambda == 0.0 => Error::Solver(format!("{msg}; one-hot designs need λ > 0")),
            other => other,
        })?;
        Ok(Self {
            cardinalities: cardinalities.to_vec(),
            lambda,
            weights,
        })
    }

    pub fn intercept(&self) -> f64 {
        self.weights[0]
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn predict(&self, rows: &[EncodedRow]) -> Result<Vec<f64>> {
        rows.iter()
            .map(|r| {
                let active = active_columns(r, &self.cardinalities)?;
                Ok(active.iter().map(|&i| self.weights[i]).sum())
            })
            .collect()
    }
}

/// Nonzero design-matrix columns of a row: the intercept plus one slot per
/// feature.
fn active_columns(row: &EncodedRow, cardinalities: &[usize]) -> Result<Vec<usize>> {
    if row.indices.len() != cardinalities.len() {
        return Err(Error::Dimension {
            op: "ridge_design",
            lhs: vec![row.indices.len()],
            rhs: vec![cardinalities.len()],
        });
    }
    let mut out = Vec::with_capacity(row.indices.len() + 1);
    out.push(0);
    let mut offset = 1;
    for (&ix, &card) in row.indices.iter().zip(cardinalities) {
        if ix >= card {
            return Err(Error::Lookup { index: ix, size: card });
        }
        out.push(offset + ix);
        offset += card;
    }
    Ok(out)
}

/// Solves `A·x = b` for symmetric positive definite `A` (row-major, `n×n`)
/// by Cholesky factorization. `A` is overwritten by its factor.
pub fn solve_spd(a: &mut [f64], b: &[f64], n: usize) -> Result<Vec<f64>> {
    let scale = (0..n).map(|i| a[i * n + i].abs()).fold(0.0, f64::max).max(1.0);
    let tol = 1e-12 * scale;
    for j in 0..n {
        let mut d = a[j * n + j];
        for k in 0..j {
            d -= a[j * n + k] * a[j * n + k];
        }
        if d.is_nan() || d <= tol {
            return Err(Error::Solver(format!(
                "matrix is singular or not positive definite (pivot {j} = {d:e})"
            )));
        }
        let d = d.sqrt();
        a[j * n + j] = d;
        for i in j + 1..n {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= a[i * n + k] * a[j * n + k];
            }
            a[i * n + j] = s / d;
        }
    }
    // forward: L·z = b
    let mut x = b.to_vec();
    for i in 0..n {
        for k in 0..i {
            x[i] -= a[i * n + k] * x[k];
        }
        x[i] /= a[i * n + i];
    }
    // backward: Lᵀ·x = z
    for i in (0..n).rev() {
        for k in i + 1..n {
            x[i] -= a[k * n + i] * x[k];
        }
        x[i] /= a[i * n + i];
    }
    Ok(x)
}
