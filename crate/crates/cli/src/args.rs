//! Command-line surface. Experiment flags mirror the config file fields and
//! take precedence over it.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use eapcr_core::features::SplitSpec;
use eapcr_core::io::{ExperimentConfig, SweepAxis, SweepParam};
use eapcr_core::{Error, Result};

#[derive(Debug, Parser)]
#[command(
    name = "eapcr",
    version,
    about = "EAPCR regression experiments on heterogeneous tabular data"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train and evaluate one configuration (sweep axes are ignored).
    Fit(ExperimentArgs),
    /// Train and evaluate every cell of the sweep grid.
    Sweep(ExperimentArgs),
    /// Evaluate the one-hot ridge baseline with the same splits and seeds.
    Baseline(ExperimentArgs),
    /// Predict a CSV of rows with a saved checkpoint.
    Predict(PredictArgs),
    /// Check a checkpoint's structure, digest and parameters.
    VerifyCheckpoint(VerifyArgs),
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// CSV with the checkpoint's feature columns; target columns are optional.
    #[arg(long)]
    pub input: PathBuf,
    /// Output CSV; stdout when omitted.
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    pub checkpoint: PathBuf,
}

#[derive(Debug, Default, Args)]
pub struct ExperimentArgs {
    /// Experiment config (TOML); every flag below overrides its field.
    #[arg(long, short)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub schema: Option<PathBuf>,
    #[arg(long)]
    pub output_dir: Option<PathBuf>,
    /// Train fraction of a single split.
    #[arg(long, conflicts_with = "k_fold")]
    pub ratio: Option<f64>,
    /// Number of cross-validation folds.
    #[arg(long)]
    pub k_fold: Option<usize>,
    /// Comma-separated repeat seeds.
    #[arg(long, value_delimiter = ',')]
    pub seeds: Option<Vec<u64>>,
    /// Evaluate only this target column.
    #[arg(long)]
    pub target: Option<String>,
    /// Grid cells trained in parallel.
    #[arg(long)]
    pub workers: Option<usize>,
    #[arg(long)]
    pub save_checkpoints: Option<bool>,
    #[arg(long)]
    pub ridge_lambda: Option<f64>,

    #[arg(long, alias = "embed-size")]
    pub embed_dim: Option<usize>,
    /// Channels of the two conv layers, e.g. `8,16`.
    #[arg(long, value_delimiter = ',')]
    pub conv_channels: Option<Vec<usize>>,
    /// Hidden widths of the residual MLP, e.g. `64` or `128,64`; `none` for
    /// a linear residual.
    #[arg(long)]
    pub mlp_hidden: Option<String>,

    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub max_epochs: Option<usize>,
    #[arg(long)]
    pub patience: Option<usize>,
    /// Seed of parameter init and batch order.
    #[arg(long)]
    pub train_seed: Option<u64>,
    #[arg(long)]
    pub early_stopping: Option<bool>,
    #[arg(long)]
    pub scale_targets: Option<bool>,
    #[arg(long)]
    pub validation_fraction: Option<f64>,

    /// Sweep axis `param=v1,v2,...`; repeat for a cartesian grid. Replaces
    /// the config file's axes.
    #[arg(long = "sweep", value_name = "PARAM=VALUES")]
    pub sweep: Vec<String>,
}

pub fn parse_axis(spec: &str) -> Result<SweepAxis> {
    let (name, values) = spec
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("sweep axis `{spec}` is not PARAM=V1,V2,...")))?;
    let param: SweepParam = name.trim().parse()?;
    let values = values
        .split(',')
        .map(|v| {
            v.trim()
                .parse::<f64>()
                .map_err(|_| Error::Config(format!("sweep value `{v}` for {param} is not a number")))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SweepAxis { param, values })
}

fn parse_widths(text: &str) -> Result<Vec<usize>> {
    if text.trim() == "none" {
        return Ok(Vec::new());
    }
    text.split(',')
        .map(|w| {
            w.trim()
                .parse()
                .map_err(|_| Error::Config(format!("MLP width `{w}` is not a positive integer")))
        })
        .collect()
}

impl ExperimentArgs {
    /// The config file (if any) with every given flag applied on top.
    pub fn resolve(&self) -> Result<ExperimentConfig> {
        let mut c = match &self.config {
            Some(path) => ExperimentConfig::load(path)?,
            None => match (&self.data, &self.schema) {
                (Some(d), Some(s)) => ExperimentConfig::new(d, s),
                _ => return Err(Error::Config("pass --config, or both --data and --schema".into())),
            },
        };
        macro_rules! set {
            ($($flag:ident => $($field:ident).+),* $(,)?) => {
                $(if let Some(v) = &self.$flag {
                    c.$($field).+ = v.clone();
                })*
            };
        }
        set! {
            data => data,
            schema => schema,
            output_dir => output_dir,
            seeds => seeds,
            workers => workers,
            save_checkpoints => save_checkpoints,
            ridge_lambda => ridge_lambda,
            embed_dim => model.embed_dim,
            learning_rate => train.learning_rate,
            batch_size => train.batch_size,
            max_epochs => train.max_epochs,
            patience => train.patience,
            train_seed => train.seed,
            early_stopping => train.early_stopping,
            scale_targets => train.scale_targets,
            validation_fraction => train.validation_fraction,
        }
        if let Some(t) = &self.target {
            c.target = Some(t.clone());
        }
        if let Some(r) = self.ratio {
            c.split = Some(SplitSpec::Ratio(r));
        }
        if let Some(k) = self.k_fold {
            c.split = Some(SplitSpec::KFold(k));
        }
        if let Some(ch) = &self.conv_channels {
            c.model.conv_channels = match ch[..] {
                [a, b] => [a, b],
                _ => return Err(Error::Config(format!("--conv-channels takes two widths, got {ch:?}"))),
            };
        }
        if let Some(w) = &self.mlp_hidden {
            c.model.mlp_hidden = parse_widths(w)?;
        }
        if !self.sweep.is_empty() {
            c.sweep = self.sweep.iter().map(|s| parse_axis(s)).collect::<Result<_>>()?;
        }
        c.validate()?;
        c.train.validate()?;
        Ok(c)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn axes_parse_from_flags() {
        let a = parse_axis("embed_size=8,16, 32").unwrap();
        assert_eq!(a.param, SweepParam::EmbedSize);
        assert_eq!(a.values, vec![8.0, 16.0, 32.0]);
        assert!(parse_axis("embed_size").is_err());
        assert!(parse_axis("depth=1,2").is_err());
        assert!(parse_axis("n_bins=4,x").is_err());
    }

    #[test]
    fn flags_need_a_dataset_without_a_config() {
        assert!(matches!(ExperimentArgs::default().resolve(), Err(Error::Config(_))));
    }

    #[test]
    fn flags_fill_a_config_from_scratch() {
        let args = ExperimentArgs {
            data: Some("d.csv".into()),
            schema: Some("s.toml".into()),
            k_fold: Some(5),
            embed_dim: Some(32),
            mlp_hidden: Some("none".into()),
            early_stopping: Some(false),
            sweep: vec!["n_bins=8,14".into()],
            ..ExperimentArgs::default()
        };
        let c = args.resolve().unwrap();
        assert_eq!(c.split, Some(SplitSpec::KFold(5)));
        assert_eq!(c.model.embed_dim, 32);
        assert!(c.model.mlp_hidden.is_empty());
        assert!(!c.train.early_stopping);
        assert_eq!(c.sweep.len(), 1);
    }
}
