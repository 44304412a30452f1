//! Mini-batch training of [`EapcrParams`] under mean squared error.

mod adam;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use adam::{adam_step, AdamState};

use crate::error::{Error, Result};
use crate::features::EncodedRow;
use crate::model::{self, EapcrParams, ModelConfig, PermutationSpec};
use crate::tensor::{Tape, Tensor, Var};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Epochs without a validation improvement before stopping.
    pub patience: usize,
    pub seed: u64,
    /// Standardize targets with statistics of the training rows.
    pub scale_targets: bool,
    /// Hold out `validation_fraction` of the training rows and keep the
    /// parameters with the lowest validation MSE.
    pub early_stopping: bool,
    pub validation_fraction: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            batch_size: 32,
            max_epochs: 3000,
            patience: 50,
            seed: 0,
            scale_targets: true,
            early_stopping: true,
            validation_fraction: 0.1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be at least 1".into()));
        }
        if self.patience == 0 {
            return Err(Error::Config("patience must be at least 1".into()));
        }
        if self.max_epochs == 0 {
            return Err(Error::Config("max_epochs must be at least 1".into()));
        }
        if self.early_stopping && !(self.validation_fraction > 0.0 && self.validation_fraction < 1.0) {
            return Err(Error::Config(format!(
                "validation fraction must lie in (0, 1), got {}",
                self.validation_fraction
            )));
        }
        Ok(())
    }
}

/// Affine standardization of regression targets.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TargetScaler {
    pub mean: f64,
    pub std: f64,
}

impl TargetScaler {
    pub fn identity() -> Self {
        Self { mean: 0.0, std: 1.0 }
    }

    /// Mean and population standard deviation of `targets`; a constant
    /// column keeps unit scale.
    pub fn fit(targets: &[f64]) -> Result<Self> {
        if targets.is_empty() {
            return Err(Error::Fit("cannot fit a target scaler on zero rows".into()));
        }
        let n = targets.len() as f64;
        let mean = targets.iter().sum::<f64>() / n;
        let var = targets.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / n;
        let std = var.sqrt();
        if !mean.is_finite() || !std.is_finite() {
            return Err(Error::Fit("targets are not finite".into()));
        }
        Ok(Self {
            mean,
            std: if std > 0.0 { std } else { 1.0 },
        })
    }

    pub fn transform(&self, y: f64) -> f64 {
        (y - self.mean) / self.std
    }

    pub fn inverse(&self, y: f64) -> f64 {
        y * self.std + self.mean
    }
}

/// `(1/B)·Σ(ŷ − y)²` over two equally shaped vectors.
pub fn mse_loss(tape: &mut Tape, predictions: Var, targets: Var) -> Result<Var> {
    let (sp, st) = (tape.value(predictions).shape(), tape.value(targets).shape());
    if sp != st || sp.len() != 1 {
        return Err(Error::Dimension {
            op: "mse_loss",
            lhs: sp.to_vec(),
            rhs: st.to_vec(),
        });
    }
    let diff = tape.sub(predictions, targets)?;
    let sq = tape.mul(diff, diff)?;
    tape.mean(sq)
}

/// Batch loss and the gradient of every parameter tensor, in layout order.
pub fn loss_and_gradients(
    params: &EapcrParams,
    spec: &PermutationSpec,
    rows: &[EncodedRow],
    targets: &[f64],
) -> Result<(f64, Vec<Tensor>)> {
    if rows.is_empty() || rows.len() != targets.len() {
        return Err(Error::Dimension {
            op: "loss_and_gradients",
            lhs: vec![rows.len()],
            rhs: vec![targets.len()],
        });
    }
    let mut tape = Tape::new();
    let vars = params.register(&mut tape, spec, true)?;
    let preds = rows
        .iter()
        .map(|x| model::forward_on_tape(&mut tape, &vars, params.config(), x).map(|t| t.prediction))
        .collect::<Result<Vec<_>>>()?;
    let preds = tape.concat(&preds, 0)?;
    let y = tape.constant(Tensor::from_vec(targets.to_vec()))?;
    let loss = mse_loss(&mut tape, preds, y)?;
    let loss_value = tape.value(loss).data()[0];
    let grads = tape.backward(loss)?;
    let grads = vars.params.iter().map(|&v| grads.get_or_zeros(v, &tape)).collect();
    Ok((loss_value, grads))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean batch loss over the epoch, on the scaled target.
    pub train_mse: f64,
    pub val_mse: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    /// Best-validation parameters, or the final ones without early stopping.
    pub params: EapcrParams,
    pub scaler: TargetScaler,
    pub curve: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub stopped_early: bool,
}

impl TrainOutcome {
    /// Predictions on the original target scale.
    pub fn predict(&self, rows: &[EncodedRow]) -> Result<Vec<f64>> {
        let spec = PermutationSpec::new(self.params.config().n_features())?;
        let raw = model::predict(rows, &self.params, &spec)?;
        Ok(raw.into_iter().map(|y| self.scaler.inverse(y)).collect())
    }
}

fn mse(pred: &[f64], target: &[f64]) -> f64 {
    pred.iter().zip(target).map(|(p, t)| (p - t).powi(2)).sum::<f64>() / pred.len() as f64
}

/// Trains a freshly initialized model on `rows`/`targets`.
///
/// Batches are reshuffled every epoch from a stream seeded by
/// `config.seed`, so equal inputs give identical curves and parameters.
pub fn train(
    rows: &[EncodedRow],
    targets: &[f64],
    model_config: &ModelConfig,
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    config.validate()?;
    model_config.validate()?;
    if rows.is_empty() {
        return Err(Error::Fit("training split is empty".into()));
    }
    if rows.len() != targets.len() {
        return Err(Error::Dimension {
            op: "train",
            lhs: vec![rows.len()],
            rhs: vec![targets.len()],
        });
    }
    let spec = PermutationSpec::new(model_config.n_features())?;
    let scaler = if config.scale_targets {
        TargetScaler::fit(targets)?
    } else {
        TargetScaler::identity()
    };
    let scaled: Vec<f64> = targets.iter().map(|&y| scaler.transform(y)).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x5eed_ba7c_4e55_0001);
    let mut order: Vec<usize> = (0..rows.len()).collect();
    let mut val_idx = Vec::new();
    if config.early_stopping && rows.len() >= 2 {
        order.shuffle(&mut rng);
        let n_val = ((config.validation_fraction * rows.len() as f64).round() as usize).clamp(1, rows.len() - 1);
        val_idx = order.split_off(rows.len() - n_val);
    }
    let val_rows: Vec<EncodedRow> = val_idx.iter().map(|&i| rows[i].clone()).collect();
    let val_targets: Vec<f64> = val_idx.iter().map(|&i| scaled[i]).collect();

    let mut params = EapcrParams::init(model_config, config.seed)?;
    let mut state = AdamState::new(params.named());
    let batch_size = config.batch_size.min(order.len());

    let mut best = params.clone();
    let mut best_val = f64::INFINITY;
    let mut best_epoch = 0;
    let mut curve = Vec::new();
    let mut stopped_early = false;

    let mut batch_rows = Vec::with_capacity(batch_size);
    let mut batch_targets = Vec::with_capacity(batch_size);
    for epoch in 1..=config.max_epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for chunk in order.chunks(batch_size) {
            batch_rows.clear();
            batch_targets.clear();
            batch_rows.extend(chunk.iter().map(|&i| rows[i].clone()));
            batch_targets.extend(chunk.iter().map(|&i| scaled[i]));
            let (loss, grads) = match loss_and_gradients(&params, &spec, &batch_rows, &batch_targets) {
                Ok(v) => v,
                Err(Error::NonFinite { .. }) => {
                    return Err(Error::Diverged {
                        epoch,
                        last_good: Box::new(params),
                    })
                }
                Err(e) => return Err(e),
            };
            loss_sum += loss * chunk.len() as f64;
            adam_step(params.tensors_mut(), &grads, &mut state, config.learning_rate)?;
        }
        let train_mse = loss_sum / order.len() as f64;

        let val_mse = if val_rows.is_empty() {
            None
        } else {
            let pred = match model::predict(&val_rows, &params, &spec) {
                Ok(p) => p,
                Err(Error::NonFinite { .. }) => {
                    return Err(Error::Diverged {
                        epoch,
                        last_good: Box::new(best),
                    })
                }
                Err(e) => return Err(e),
            };
            Some(mse(&pred, &val_targets))
        };
        curve.push(EpochRecord {
            epoch,
            train_mse,
            val_mse,
        });
        log::trace!("epoch {epoch}: train {train_mse:.6} val {val_mse:?}");

        if let Some(v) = val_mse {
            if v < best_val {
                best_val = v;
                best_epoch = epoch;
                best = params.clone();
            } else if epoch - best_epoch >= config.patience {
                stopped_early = true;
                break;
            }
        }
    }

    if val_rows.is_empty() {
        best = params;
        best_epoch = curve.len();
    }
    Ok(TrainOutcome {
        params: best,
        scaler,
        curve,
        best_epoch,
        stopped_early,
    })
}
