//! Evaluation and export tools operating on checkpoints.

mod compare;
mod evaluate;
mod heatmap;
mod traces;

pub use compare::{compare, read_compare_csv, write_compare_csv, CompareEntry, REPORT_FILE};
pub use evaluate::{evaluate, evaluate_checkpoint, quartiles, rollout_samples, EvalConfig, EvalReport, EvalRow};
pub use heatmap::{default_grid, heatmap, HeatmapMeta};
pub use traces::{export_traces, TraceExport};
