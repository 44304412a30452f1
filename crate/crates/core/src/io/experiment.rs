//! Experiment configuration and the sweep grid runner.

use std::fmt;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evaluation::{evaluate, Estimator, Evaluation, FittedModel, DEFAULT_RIDGE_LAMBDA};
use crate::features::{FeatureSchema, RowTable, SplitSpec};
use crate::io::checkpoint::{save_checkpoint, Checkpoint};
use crate::io::csv::load_csv;
use crate::io::report::{emit_aggregate, emit_report, write_curve, AggregateRow};
use crate::model::ArchConfig;
use crate::trainer::TrainConfig;

/// Hyperparameters a sweep axis may vary.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParam {
    EmbedSize,
    NBins,
    LearningRate,
    BatchSize,
    MaxEpochs,
    Patience,
    RidgeLambda,
}

impl SweepParam {
    pub const ALL: [SweepParam; 7] = [
        SweepParam::EmbedSize,
        SweepParam::NBins,
        SweepParam::LearningRate,
        SweepParam::BatchSize,
        SweepParam::MaxEpochs,
        SweepParam::Patience,
        SweepParam::RidgeLambda,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SweepParam::EmbedSize => "embed_size",
            SweepParam::NBins => "n_bins",
            SweepParam::LearningRate => "learning_rate",
            SweepParam::BatchSize => "batch_size",
            SweepParam::MaxEpochs => "max_epochs",
            SweepParam::Patience => "patience",
            SweepParam::RidgeLambda => "ridge_lambda",
        }
    }

    fn is_integer(self) -> bool {
        !matches!(self, SweepParam::LearningRate | SweepParam::RidgeLambda)
    }
}

impl std::str::FromStr for SweepParam {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        SweepParam::ALL.into_iter().find(|p| p.name() == s).ok_or_else(|| {
            let names: Vec<_> = SweepParam::ALL.iter().map(|p| p.name()).collect();
            Error::Config(format!(
                "unknown sweep parameter `{s}` (expected one of {})",
                names.join(", ")
            ))
        })
    }
}

impl fmt::Display for SweepParam {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepAxis {
    pub param: SweepParam,
    pub values: Vec<f64>,
}

/// Which estimator a grid trains.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ModelKind {
    Eapcr,
    Ridge,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("eapcr-out")
}
fn default_seeds() -> Vec<u64> {
    vec![0, 1, 2, 3, 4]
}
fn default_workers() -> usize {
    1
}
fn default_true() -> bool {
    true
}
fn default_lambda() -> f64 {
    DEFAULT_RIDGE_LAMBDA
}

/// One experiment: a dataset, how to split it, what to train and which
/// hyperparameters to sweep.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub data: PathBuf,
    pub schema: PathBuf,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    /// Falls back to the schema's split when absent.
    #[serde(default)]
    pub split: Option<SplitSpec>,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    /// Restrict to one target column; all targets otherwise.
    #[serde(default)]
    pub target: Option<String>,
    #[serde(default = "default_workers")]
    pub workers: usize,
    #[serde(default = "default_true")]
    pub save_checkpoints: bool,
    #[serde(default = "default_lambda")]
    pub ridge_lambda: f64,
    #[serde(default)]
    pub model: ArchConfig,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub sweep: Vec<SweepAxis>,
}

impl ExperimentConfig {
    pub fn new(data: impl Into<PathBuf>, schema: impl Into<PathBuf>) -> Self {
        Self {
            data: data.into(),
            schema: schema.into(),
            output_dir: default_output_dir(),
            split: None,
            seeds: default_seeds(),
            target: None,
            workers: default_workers(),
            save_checkpoints: true,
            ridge_lambda: DEFAULT_RIDGE_LAMBDA,
            model: ArchConfig::default(),
            train: TrainConfig::default(),
            sweep: Vec::new(),
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let config: Self = toml::from_str(text)?;
        config.validate()?;
        Ok(config)
    }

    /// Reads a TOML config; relative paths inside it resolve against the
    /// directory of the file.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut config = Self::from_toml_str(&text)?;
        if let Some(base) = path.parent() {
            for p in [&mut config.data, &mut config.schema, &mut config.output_dir] {
                if p.is_relative() {
                    *p = base.join(&*p);
                }
            }
        }
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::Config("`seeds` must not be empty".into()));
        }
        if self.workers == 0 {
            return Err(Error::Config("`workers` must be at least 1".into()));
        }
        if !(self.ridge_lambda.is_finite() && self.ridge_lambda >= 0.0) {
            return Err(Error::Config("`ridge_lambda` must be finite and ≥ 0".into()));
        }
        self.train.validate()?;
        for (i, axis) in self.sweep.iter().enumerate() {
            if self.sweep[..i].iter().any(|a| a.param == axis.param) {
                return Err(Error::Config(format!("sweep axis `{}` appears twice", axis.param)));
            }
            if axis.values.is_empty() {
                return Err(Error::Config(format!("sweep axis `{}` has no values", axis.param)));
            }
            for &v in &axis.values {
                let ok = if axis.param.is_integer() {
                    v.fract() == 0.0 && v >= 1.0
                } else {
                    v.is_finite() && v > 0.0
                };
                if !ok {
                    return Err(Error::Config(format!(
                        "sweep axis `{}` has invalid value {v}",
                        axis.param
                    )));
                }
            }
            let mut sorted = axis.values.clone();
            sorted.sort_by(f64::total_cmp);
            if sorted.windows(2).any(|w| w[0] == w[1]) {
                return Err(Error::Config(format!("sweep axis `{}` repeats a value", axis.param)));
            }
        }
        Ok(())
    }

    /// Resolved split: the config's, else the schema's.
    pub fn split_for(&self, schema: &FeatureSchema) -> Result<SplitSpec> {
        self.split
            .or(schema.split)
            .ok_or_else(|| Error::Config("no split given in the experiment config or the schema".into()))
    }
}

/// One point of the sweep grid.
#[derive(Clone, Debug, PartialEq)]
pub struct GridCell {
    pub params: Vec<(SweepParam, f64)>,
}

impl GridCell {
    /// Directory name, e.g. `embed_size=8` or `embed_size=8,n_bins=14`.
    pub fn label(&self) -> String {
        if self.params.is_empty() {
            return "default".into();
        }
        self.params
            .iter()
            .map(|(p, v)| format!("{p}={v}"))
            .collect::<Vec<_>>()
            .join(",")
    }

    fn named(&self) -> Vec<(String, f64)> {
        self.params.iter().map(|(p, v)| (p.name().to_owned(), *v)).collect()
    }

    /// Applies the cell's values on top of the base configuration.
    pub fn apply(
        &self,
        config: &ExperimentConfig,
        schema: &FeatureSchema,
    ) -> Result<(ExperimentConfig, FeatureSchema)> {
        let mut config = config.clone();
        let mut schema = schema.clone();
        for &(param, v) in &self.params {
            let n = v as usize;
            match param {
                SweepParam::EmbedSize => config.model.embed_dim = n,
                SweepParam::NBins => schema = schema.with_n_bins(n)?,
                SweepParam::LearningRate => config.train.learning_rate = v,
                SweepParam::BatchSize => config.train.batch_size = n,
                SweepParam::MaxEpochs => config.train.max_epochs = n,
                SweepParam::Patience => config.train.patience = n,
                SweepParam::RidgeLambda => config.ridge_lambda = v,
            }
        }
        config.train.validate()?;
        Ok((config, schema))
    }
}

/// Cartesian product of the sweep axes, each axis sorted ascending, axes
/// varying slowest-first in config order. No axes yield one empty cell.
pub fn sweep_grid(axes: &[SweepAxis]) -> Vec<GridCell> {
    let mut cells = vec![GridCell { params: Vec::new() }];
    for axis in axes {
        let mut values = axis.values.clone();
        values.sort_by(f64::total_cmp);
        cells = cells
            .into_iter()
            .flat_map(|cell| {
                values.iter().map(move |&v| {
                    let mut params = cell.params.clone();
                    params.push((axis.param, v));
                    GridCell { params }
                })
            })
            .collect();
    }
    cells
}

/// A failed (cell, target) pair.
#[derive(Debug)]
pub struct CellFailure {
    pub cell: String,
    pub target: String,
    pub error: Error,
}

#[derive(Debug)]
pub struct ExperimentOutcome {
    /// One row per (cell, target), in grid order.
    pub aggregate: Vec<AggregateRow>,
    pub failures: Vec<CellFailure>,
}

impl ExperimentOutcome {
    /// 0 when every cell succeeded, 2 if any failure was numeric, else 1.
    pub fn exit_code(&self) -> i32 {
        if self.failures.is_empty() {
            0
        } else if self.failures.iter().any(|f| f.error.is_numeric()) {
            2
        } else {
            1
        }
    }
}

fn sanitize(name: &str) -> String {
    name.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || "-_.=,".contains(c) {
                c
            } else {
                '_'
            }
        })
        .collect()
}

fn write_run_artifacts(dir: &Path, target: &str, eval: &Evaluation, save_checkpoints: bool) -> Result<()> {
    emit_report(dir, &eval.report, &eval.predictions())?;
    for run in &eval.runs {
        let FittedModel::Eapcr {
            params, scaler, curve, ..
        } = &run.model
        else {
            continue;
        };
        let stem = format!("seed-{}-split-{}", run.seed, run.split);
        let curves = dir.join("curves");
        std::fs::create_dir_all(&curves).map_err(|e| Error::io(&curves, e))?;
        write_curve(&curves.join(format!("{stem}.csv")), curve)?;
        if save_checkpoints {
            let ckdir = dir.join("checkpoints");
            std::fs::create_dir_all(&ckdir).map_err(|e| Error::io(&ckdir, e))?;
            let ck = Checkpoint {
                target: target.to_owned(),
                encoder: run.encoder.clone(),
                scaler: *scaler,
                params: params.clone(),
            };
            save_checkpoint(ckdir.join(format!("{stem}.eapcr")), &ck)?;
        }
    }
    Ok(())
}

/// Runs every (cell, target) of the grid on an already loaded table and
/// writes reports under `config.output_dir`. Failed cells are recorded and
/// do not stop the others.
pub fn run_grid(
    config: &ExperimentConfig,
    schema: &FeatureSchema,
    table: &RowTable,
    kind: ModelKind,
) -> Result<ExperimentOutcome> {
    config.validate()?;
    schema.validate()?;
    let split = config.split_for(schema)?;
    let targets: Vec<usize> = match &config.target {
        Some(name) => vec![schema.target_index(name)?],
        None => (0..schema.targets.len()).collect(),
    };
    let grid = sweep_grid(&config.sweep);
    let flat = config.sweep.is_empty();
    let out_dir = &config.output_dir;
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;

    let jobs: Vec<(&GridCell, usize)> = grid.iter().flat_map(|c| targets.iter().map(move |&t| (c, t))).collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.workers)
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?;

    let results: Vec<(AggregateRow, Option<CellFailure>)> = pool.install(|| {
        jobs.par_iter()
            .map(|&(cell, t)| {
                let label = cell.label();
                let target = &schema.targets[t];
                let dir = if flat {
                    out_dir.join(sanitize(target))
                } else {
                    out_dir.join(sanitize(&label)).join(sanitize(target))
                };
                let attempt = || -> Result<AggregateRow> {
                    let (cfg, cell_schema) = cell.apply(config, schema)?;
                    let estimator = match kind {
                        ModelKind::Eapcr => Estimator::Eapcr {
                            arch: cfg.model.clone(),
                            train: cfg.train.clone(),
                        },
                        ModelKind::Ridge => Estimator::Ridge {
                            lambda: cfg.ridge_lambda,
                        },
                    };
                    let eval = evaluate(table, &cell_schema, t, split, &cfg.seeds, &estimator)?;
                    write_run_artifacts(&dir, target, &eval, cfg.save_checkpoints)?;
                    Ok(AggregateRow::ok(label.clone(), cell.named(), &eval.report))
                };
                match attempt() {
                    Ok(row) => (row, None),
                    Err(error) => {
                        log::error!("cell {label}, target {target}: {error}");
                        let _ = std::fs::create_dir_all(&dir)
                            .and_then(|_| std::fs::write(dir.join("error.txt"), format!("{error}\n")));
                        let row = AggregateRow::failed(label.clone(), cell.named(), target, &error);
                        (
                            row,
                            Some(CellFailure {
                                cell: label,
                                target: target.clone(),
                                error,
                            }),
                        )
                    }
                }
            })
            .collect()
    });

    let (aggregate, failures): (Vec<_>, Vec<_>) = results.into_iter().unzip();
    let failures: Vec<CellFailure> = failures.into_iter().flatten().collect();
    emit_aggregate(out_dir, &aggregate)?;
    Ok(ExperimentOutcome { aggregate, failures })
}

/// Loads schema and data named by `config` and runs the grid.
pub fn run_experiment(config: &ExperimentConfig, kind: ModelKind) -> Result<ExperimentOutcome> {
    config.validate()?;
    let schema = FeatureSchema::load(&config.schema)?;
    let table = load_csv(&config.data, &schema)?;
    run_grid(config, &schema, &table, kind)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sweep_params_parse_by_name() {
        for p in SweepParam::ALL {
            assert_eq!(p.name().parse::<SweepParam>().unwrap(), p);
        }
        assert!(matches!("embed_dim".parse::<SweepParam>(), Err(Error::Config(_))));
    }

    fn axis(param: SweepParam, values: &[f64]) -> SweepAxis {
        SweepAxis {
            param,
            values: values.to_vec(),
        }
    }

    #[test]
    fn empty_sweep_is_one_cell() {
        let g = sweep_grid(&[]);
        assert_eq!(g.len(), 1);
        assert_eq!(g[0].label(), "default");
    }

    #[test]
    fn grid_is_sorted_cartesian_product() {
        let g = sweep_grid(&[
            axis(SweepParam::EmbedSize, &[16.0, 8.0]),
            axis(SweepParam::LearningRate, &[1e-2, 1e-3, 1e-4]),
        ]);
        assert_eq!(g.len(), 6);
        assert_eq!(
            g[0].params,
            vec![(SweepParam::EmbedSize, 8.0), (SweepParam::LearningRate, 1e-4)]
        );
        assert_eq!(
            g[5].params,
            vec![(SweepParam::EmbedSize, 16.0), (SweepParam::LearningRate, 1e-2)]
        );
        assert_eq!(g[1].label(), "embed_size=8,learning_rate=0.001");
    }

    #[test]
    fn toml_config_parses_with_defaults() {
        let c = ExperimentConfig::from_toml_str(
            r#"
            data = "d.csv"
            schema = "s.toml"
            split = { k_fold = 5 }
            [model]
            embed_dim = 16
            [[sweep]]
            param = "n_bins"
            values = [8, 14]
            "#,
        )
        .unwrap();
        assert_eq!(c.split, Some(SplitSpec::KFold(5)));
        assert_eq!(c.seeds, vec![0, 1, 2, 3, 4]);
        assert_eq!(c.model.embed_dim, 16);
        assert_eq!(c.model.conv_channels, ArchConfig::default().conv_channels);
        assert_eq!(c.sweep[0].param, SweepParam::NBins);
    }

    #[test]
    fn unknown_sweep_parameter_is_rejected() {
        let err = ExperimentConfig::from_toml_str(
            "data = \"d\"\nschema = \"s\"\n[[sweep]]\nparam = \"dropout\"\nvalues = [0.1]\n",
        );
        assert!(err.is_err());
    }

    #[test]
    fn invalid_axes_and_seeds_are_rejected() {
        let mut c = ExperimentConfig::new("d", "s");
        c.seeds.clear();
        assert!(matches!(c.validate(), Err(Error::Config(_))));
        let mut c = ExperimentConfig::new("d", "s");
        c.sweep.push(axis(SweepParam::EmbedSize, &[8.5]));
        assert!(matches!(c.validate(), Err(Error::Config(_))));
        let mut c = ExperimentConfig::new("d", "s");
        c.sweep.push(axis(SweepParam::NBins, &[8.0, 8.0]));
        assert!(matches!(c.validate(), Err(Error::Config(_))));
    }
}
