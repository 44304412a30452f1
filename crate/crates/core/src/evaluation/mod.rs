//! Regression metrics, split/cross-validation runs and the ridge baseline.

mod metrics;
mod ridge;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use metrics::{mae, mse, r2, rmse, RunMetrics, Summary};
pub use ridge::{solve_spd, RidgeModel};

use crate::error::{Error, Result};
use crate::features::{knn_impute, split_dataset, FeatureEncoder, FeatureSchema, RowTable, SplitSpec};
use crate::model::{ArchConfig, EapcrParams, ModelConfig};
use crate::trainer::{self, EpochRecord, TargetScaler, TrainConfig};

/// Default ridge penalty of the baseline.
pub const DEFAULT_RIDGE_LAMBDA: f64 = 1e-3;

/// What gets fitted on each training partition.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Estimator {
    Eapcr { arch: ArchConfig, train: TrainConfig },
    Ridge { lambda: f64 },
}

impl Estimator {
    pub fn name(&self) -> &'static str {
        match self {
            Estimator::Eapcr { .. } => "eapcr",
            Estimator::Ridge { .. } => "ridge",
        }
    }
}

/// One test-row prediction, on the original target scale.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredictionRow {
    pub seed: u64,
    pub split: usize,
    /// Row id in the source table.
    pub row: usize,
    pub y_true: f64,
    pub y_pred: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub seed: u64,
    pub split: usize,
    pub n_train: usize,
    pub n_test: usize,
    pub metrics: RunMetrics,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub best_epoch: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epochs_run: Option<usize>,
}

/// Metrics of every run of one configuration plus their aggregates.
///
/// The `±` of an aggregate is the sample standard deviation across runs
/// (seeded repeats × folds); one run has deviation 0. `pooled` scores all
/// test predictions of all runs at once, which keeps R² defined for
/// leave-one-out folds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub model: String,
    pub target: String,
    pub split: SplitSpec,
    pub seeds: Vec<u64>,
    pub config_hash: String,
    pub runs: Vec<RunSummary>,
    pub mae: Summary,
    pub mse: Summary,
    pub rmse: Summary,
    /// `None` when R² was undefined in every run.
    pub r2: Option<Summary>,
    pub pooled: RunMetrics,
}

impl MetricsReport {
    pub fn from_runs(
        model: &str,
        target: &str,
        split: SplitSpec,
        seeds: &[u64],
        config_hash: String,
        runs: Vec<RunSummary>,
        predictions: &[PredictionRow],
    ) -> Result<Self> {
        let col =
            |f: fn(&RunMetrics) -> Option<f64>| -> Vec<f64> { runs.iter().filter_map(|r| f(&r.metrics)).collect() };
        let need = |s: Option<Summary>| s.ok_or_else(|| Error::Contract("report without runs".into()));
        let y: Vec<f64> = predictions.iter().map(|p| p.y_true).collect();
        let y_hat: Vec<f64> = predictions.iter().map(|p| p.y_pred).collect();
        Ok(Self {
            model: model.to_owned(),
            target: target.to_owned(),
            split,
            seeds: seeds.to_vec(),
            config_hash,
            mae: need(Summary::of(&col(|m| Some(m.mae))))?,
            mse: need(Summary::of(&col(|m| Some(m.mse))))?,
            rmse: need(Summary::of(&col(|m| Some(m.rmse))))?,
            r2: Summary::of(&col(|m| m.r2)),
            pooled: RunMetrics::compute(&y, &y_hat)?,
            runs,
        })
    }
}

/// Everything one run fitted, enough to rebuild its predictions.
#[derive(Clone, Debug)]
pub struct FittedRun {
    pub seed: u64,
    pub split: usize,
    pub train_rows: Vec<usize>,
    pub test_rows: Vec<usize>,
    pub encoder: FeatureEncoder,
    pub model: FittedModel,
    pub predictions: Vec<PredictionRow>,
    pub metrics: RunMetrics,
}

#[derive(Clone, Debug)]
pub enum FittedModel {
    Eapcr {
        params: EapcrParams,
        scaler: TargetScaler,
        curve: Vec<EpochRecord>,
        best_epoch: usize,
    },
    Ridge(RidgeModel),
}

#[derive(Clone, Debug)]
pub struct Evaluation {
    pub report: MetricsReport,
    pub runs: Vec<FittedRun>,
}

impl Evaluation {
    pub fn predictions(&self) -> Vec<PredictionRow> {
        self.runs.iter().flat_map(|r| r.predictions.iter().copied()).collect()
    }
}

/// Stable short digest of any serializable configuration.
pub fn config_hash<T: Serialize>(value: &T) -> Result<String> {
    let json = serde_json::to_vec(value)?;
    Ok(hex::encode(&Sha256::digest(&json)[..8]))
}

/// Evaluates `estimator` on `table` for every seed and every partition of
/// `split`. Encoders (and target scaling) are fitted on each training
/// partition alone; kNN imputation, when configured, runs over the feature
/// cells of the whole table first.
pub fn evaluate(
    table: &RowTable,
    schema: &FeatureSchema,
    target: usize,
    split: SplitSpec,
    seeds: &[u64],
    estimator: &Estimator,
) -> Result<Evaluation> {
    schema.validate()?;
    if seeds.is_empty() {
        return Err(Error::Config("at least one seed is required".into()));
    }
    let target_name = schema
        .targets
        .get(target)
        .ok_or_else(|| Error::Schema(format!("no target column {target}")))?
        .clone();
    let rows = match &schema.imputation {
        Some(imp) => knn_impute(&table.rows, schema, imp.k)?,
        None => table.rows.clone(),
    };
    let table = RowTable {
        feature_names: table.feature_names.clone(),
        target_names: table.target_names.clone(),
        rows,
    };
    let all_targets = table.target_values(target, &(0..table.len()).collect::<Vec<_>>())?;

    let mut jobs = Vec::new();
    for &seed in seeds {
        for (i, part) in split_dataset(table.len(), split, seed)?.into_iter().enumerate() {
            jobs.push((seed, i, part));
        }
    }
    let runs = jobs
        .into_par_iter()
        .map(|(seed, split_ix, part)| {
            let train_raw = table.select(&part.train);
            let test_raw = table.select(&part.test);
            let encoder = FeatureEncoder::fit(&train_raw, schema)?;
            let x_train = encoder.transform(&train_raw)?;
            let x_test = encoder.transform(&test_raw)?;
            let y_train: Vec<f64> = part.train.iter().map(|&i| all_targets[i]).collect();
            let y_test: Vec<f64> = part.test.iter().map(|&i| all_targets[i]).collect();
            let (model, y_pred) = match estimator {
                Estimator::Eapcr { arch, train } => {
                    let mc = ModelConfig::new(arch.clone(), encoder.cardinalities())?;
                    let tc = TrainConfig { seed, ..train.clone() };
                    let outcome = trainer::train(&x_train, &y_train, &mc, &tc)?;
                    let y_pred = outcome.predict(&x_test)?;
                    let model = FittedModel::Eapcr {
                        best_epoch: outcome.best_epoch,
                        params: outcome.params,
                        scaler: outcome.scaler,
                        curve: outcome.curve,
                    };
                    (model, y_pred)
                }
                Estimator::Ridge { lambda } => {
                    let m = RidgeModel::fit(&x_train, &encoder.cardinalities(), &y_train, *lambda)?;
                    let y_pred = m.predict(&x_test)?;
                    (FittedModel::Ridge(m), y_pred)
                }
            };
            if y_pred.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite { op: "predict" });
            }
            let metrics = RunMetrics::compute(&y_test, &y_pred)?;
            let predictions = part
                .test
                .iter()
                .zip(y_test.iter().zip(&y_pred))
                .map(|(&i, (&y_true, &y_pred))| PredictionRow {
                    seed,
                    split: split_ix,
                    row: table.rows[i].id,
                    y_true,
                    y_pred,
                })
                .collect();
            Ok(FittedRun {
                seed,
                split: split_ix,
                train_rows: part.train,
                test_rows: part.test,
                encoder,
                model,
                predictions,
                metrics,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let summaries = runs
        .iter()
        .map(|r| {
            let (best_epoch, epochs_run) = match &r.model {
                FittedModel::Eapcr { best_epoch, curve, .. } => (Some(*best_epoch), Some(curve.len())),
                FittedModel::Ridge(_) => (None, None),
            };
            RunSummary {
                seed: r.seed,
                split: r.split,
                n_train: r.train_rows.len(),
                n_test: r.test_rows.len(),
                metrics: r.metrics,
                best_epoch,
                epochs_run,
            }
        })
        .collect();
    let predictions: Vec<PredictionRow> = runs.iter().flat_map(|r| r.predictions.iter().copied()).collect();
    let hash = config_hash(&(estimator, split, seeds, schema, &target_name))?;
    let report = MetricsReport::from_runs(
        estimator.name(),
        &target_name,
        split,
        seeds,
        hash,
        summaries,
        &predictions,
    )?;
    Ok(Evaluation { report, runs })
}

/// k-fold cross-validation of the EAPCR model with `train.seed` as the
/// fold seed.
pub fn kfold_evaluate(
    table: &RowTable,
    schema: &FeatureSchema,
    target: usize,
    k: usize,
    arch: &ArchConfig,
    train: &TrainConfig,
) -> Result<Evaluation> {
    let estimator = Estimator::Eapcr {
        arch: arch.clone(),
        train: train.clone(),
    };
    evaluate(table, schema, target, SplitSpec::KFold(k), &[train.seed], &estimator)
}

/// The one-hot ridge baseline under the same splits and metrics.
pub fn ridge_baseline(
    table: &RowTable,
    schema: &FeatureSchema,
    target: usize,
    split: SplitSpec,
    seeds: &[u64],
    lambda: f64,
) -> Result<MetricsReport> {
    evaluate(table, schema, target, split, seeds, &Estimator::Ridge { lambda }).map(|e| e.report)
}
