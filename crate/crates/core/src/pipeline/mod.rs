//! Stage orchestration behind the `blastscan` command line.
//!
//! `prepare` → `segment` → `train` → `evaluate` → `report`, each reading the
//! previous stage's artifacts from the output directory.

mod config;
mod report;
mod stages;
#[cfg(feature = "plots")]
mod svg;

pub use config::{DatasetSection, EvaluationSection, PipelineConfig, ReportSection};
pub use report::{
    emit_comparison_table, history_series, load_comparison_rows, parse_comparison_rows, parse_markdown_cells,
    render_confusion, render_history_curves, ComparisonRow, CurveArtifacts, Series, TableFormat,
    BUNDLED_COMPARISON_ROWS, COMPARISON_HEADER,
};
pub use stages::{run_all, run_stage, RunLock, RunMetadata, Stage, StageOutcome, Workspace};
