//! `eapcr` — fit, sweep, baseline, predict and verify-checkpoint.
//!
//! Exit status: 0 on success, 1 for configuration or data problems (bad
//! flags included), 2 when training or a solver fails numerically.

mod args;

use std::fs;
use std::io::{self, Write};
use std::process::ExitCode;

use clap::Parser;
use eapcr_core::io::report::{render_aggregate_text, REPORT_TEXT};
use eapcr_core::io::{
    load_checkpoint, load_csv_features, run_experiment, verify_checkpoint, ExperimentOutcome, ModelKind,
};
use eapcr_core::{Error, Result};

use args::{Cli, Command, ExperimentArgs, PredictArgs};

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli.command) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn run(command: Command) -> Result<i32> {
    match command {
        Command::Fit(args) => experiment(&args, ModelKind::Eapcr, true),
        Command::Sweep(args) => experiment(&args, ModelKind::Eapcr, false),
        Command::Baseline(args) => experiment(&args, ModelKind::Ridge, false),
        Command::Predict(args) => predict(&args).map(|()| 0),
        Command::VerifyCheckpoint(args) => {
            let summary = verify_checkpoint(&args.checkpoint)?;
            println!("{}", serde_json::to_string_pretty(&summary)?);
            Ok(0)
        }
    }
}

fn experiment(args: &ExperimentArgs, kind: ModelKind, single: bool) -> Result<i32> {
    let mut config = args.resolve()?;
    if single && !config.sweep.is_empty() {
        log::warn!(
            "fit trains one configuration; ignoring {} sweep axis(es)",
            config.sweep.len()
        );
        config.sweep.clear();
    }
    let outcome = run_experiment(&config, kind)?;
    summarize(&config.output_dir, &outcome)?;
    Ok(outcome.exit_code())
}

/// Single cells print their full report, grids the aggregate table.
fn summarize(out: &std::path::Path, outcome: &ExperimentOutcome) -> Result<()> {
    let mut stdout = io::stdout().lock();
    let single = outcome.aggregate.iter().all(|r| r.params.is_empty());
    if single {
        for row in outcome.aggregate.iter().filter(|r| r.error.is_none()) {
            let path = out.join(&row.target).join(REPORT_TEXT);
            let text = fs::read_to_string(&path).map_err(|e| Error::Io { path, source: e })?;
            write!(stdout, "{text}").map_err(stdout_error)?;
        }
    } else {
        write!(stdout, "{}", render_aggregate_text(&outcome.aggregate)).map_err(stdout_error)?;
    }
    for f in &outcome.failures {
        eprintln!("cell {} / {}: {}", f.cell, f.target, f.error);
    }
    Ok(())
}

fn stdout_error(source: io::Error) -> Error {
    Error::Io {
        path: "<stdout>".into(),
        source,
    }
}

fn predict(args: &PredictArgs) -> Result<()> {
    let checkpoint = load_checkpoint(&args.checkpoint)?;
    let table = load_csv_features(&args.input, checkpoint.encoder.schema())?;
    let predictions = checkpoint.predict(&table)?;

    let sink: Box<dyn Write> = match &args.output {
        Some(path) => Box::new(fs::File::create(path).map_err(|e| Error::Io {
            path: path.clone(),
            source: e,
        })?),
        None => Box::new(io::stdout().lock()),
    };
    let mut w = csv::Writer::from_writer(sink);
    w.write_record(["row", &checkpoint.target])?;
    for (row, y) in table.rows.iter().zip(&predictions) {
        w.write_record([row.id.to_string(), y.to_string()])?;
    }
    w.flush().map_err(stdout_error)?;
    log::info!("wrote {} predictions", predictions.len());
    Ok(())
}
