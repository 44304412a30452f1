//! Dataset ingestion, checkpoints, reports and experiment orchestration.

pub mod checkpoint;
pub mod csv;
pub mod experiment;
pub mod report;

pub use self::csv::{load_csv, load_csv_features, read_csv};
pub use checkpoint::{load_checkpoint, save_checkpoint, verify_checkpoint, Checkpoint, CheckpointSummary};
pub use experiment::{
    run_experiment, run_grid, sweep_grid, ExperimentConfig, ExperimentOutcome, GridCell, ModelKind, SweepAxis,
    SweepParam,
};
pub use report::{emit_aggregate, emit_report, render_json, render_text, AggregateRow, CellStatus};
