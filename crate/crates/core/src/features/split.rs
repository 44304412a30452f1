use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Evaluation protocol: a single train fraction, or k-fold cross-validation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitSpec {
    /// Fraction of rows used for training, e.g. 0.7 for a 7:3 split.
    Ratio(f64),
    KFold(usize),
}

impl std::fmt::Display for SplitSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SplitSpec::Ratio(r) => write!(f, "ratio {r}"),
            SplitSpec::KFold(k) => write!(f, "{k}-fold"),
        }
    }
}

/// Row indices of one train/test partition.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Partition {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

/// Seeded shuffle of `0..n_rows` followed by contiguous slicing. A ratio
/// split yields one partition; k-fold yields `k` whose test sets partition
/// the rows exactly (the first `n % k` folds get one extra row).
pub fn split_dataset(n_rows: usize, spec: SplitSpec, seed: u64) -> Result<Vec<Partition>> {
    if n_rows < 2 {
        return Err(Error::Config(format!("splitting needs at least 2 rows, got {n_rows}")));
    }
    let mut order: Vec<usize> = (0..n_rows).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    match spec {
        SplitSpec::Ratio(r) => {
            if !(r > 0.0 && r < 1.0) {
                return Err(Error::Config(format!("train ratio must lie in (0, 1), got {r}")));
            }
            let n_train = (r * n_rows as f64).round() as usize;
            if n_train == 0 || n_train == n_rows {
                return Err(Error::Config(format!(
                    "ratio {r} leaves an empty partition for {n_rows} rows"
                )));
            }
            let test = order.split_off(n_train);
            Ok(vec![Partition { train: order, test }])
        }
        SplitSpec::KFold(k) => {
            if k < 2 || k > n_rows {
                return Err(Error::Config(format!("fold count must be in 2..={n_rows}, got {k}")));
            }
            let base = n_rows / k;
            let extra = n_rows % k;
            let mut start = 0;
            let mut out = Vec::with_capacity(k);
            for fold in 0..k {
                let len = base + usize::from(fold < extra);
                let test = order[start..start + len].to_vec();
                let train = order[..start].iter().chain(&order[start + len..]).copied().collect();
                out.push(Partition { train, test });
                start += len;
            }
            Ok(out)
        }
    }
}
