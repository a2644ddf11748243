//! Report artifacts: training curves, confusion renders and the comparison table.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::metrics::{ConfusionMatrix, MetricsReport, NormalizedMatrix, Score};
use crate::training::TrainingHistory;
use crate::util::read_to_string;
#[cfg(feature = "plots")]
use crate::util::write_bytes;
use crate::{Error, Result};

/// Prior-work rows shipped with the tool.
pub const BUNDLED_COMPARISON_ROWS: &str = include_str!("../../data/comparison_rows.csv");

/// One named series with one `(epoch, value)` point per epoch.
#[derive(Clone, Debug, PartialEq)]
pub struct Series {
    pub name: &'static str,
    pub points: Vec<(usize, f64)>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CurveArtifacts {
    pub csv: PathBuf,
    pub plots: Vec<PathBuf>,
    pub series: Vec<Series>,
}

pub fn history_series(history: &TrainingHistory) -> Vec<Series> {
    let pick = |name, f: fn(&crate::training::EpochRecord) -> f64| Series {
        name,
        points: history.records.iter().map(|r| (r.epoch, f(r))).collect(),
    };
    vec![
        pick("train_loss", |r| r.train_loss),
        pick("val_loss", |r| r.val_loss),
        pick("train_accuracy", |r| r.train_accuracy),
        pick("val_accuracy", |r| r.val_accuracy),
    ]
}

/// Writes `curves.csv` (the history itself) and, with the `plots` feature,
/// `loss.svg` and `accuracy.svg` into `out_dir`.
pub fn render_history_curves(history: &TrainingHistory, out_dir: &Path) -> Result<CurveArtifacts> {
    if history.is_empty() {
        return Err(Error::InvalidArgument("cannot plot an empty history".into()));
    }
    let csv = out_dir.join("curves.csv");
    history.save(&csv)?;
    let series = history_series(history);
    #[allow(unused_mut)]
    let mut plots = Vec::new();
    #[cfg(feature = "plots")]
    {
        let loss = out_dir.join("loss.svg");
        write_bytes(&loss, super::svg::line_chart("Loss", "loss", &series[..2]).as_bytes())?;
        let acc = out_dir.join("accuracy.svg");
        write_bytes(&acc, super::svg::line_chart("Accuracy", "accuracy", &series[2..]).as_bytes())?;
        plots.extend([loss, acc]);
    }
    Ok(CurveArtifacts { csv, plots, series })
}

/// Writes `confusion.svg` and `confusion_normalized.svg`; a no-op without the `plots` feature.
pub fn render_confusion(matrix: &ConfusionMatrix, normalized: &NormalizedMatrix, out_dir: &Path) -> Result<Vec<PathBuf>> {
    #[allow(unused_mut)]
    let mut out = Vec::new();
    #[cfg(feature = "plots")]
    {
        let labels: Vec<&str> = matrix.class_order.iter().map(|c| c.name()).collect();
        let counts: Vec<Vec<f64>> = matrix
            .counts
            .iter()
            .map(|row| row.iter().map(|&v| v as f64).collect())
            .collect();
        let raw = out_dir.join("confusion.svg");
        write_bytes(&raw, super::svg::heatmap("Confusion matrix", &labels, &counts, false).as_bytes())?;
        let norm = out_dir.join("confusion_normalized.svg");
        write_bytes(
            &norm,
            super::svg::heatmap("Normalized confusion matrix", &labels, &normalized.rows, true).as_bytes(),
        )?;
        out.extend([raw, norm]);
    }
    #[cfg(not(feature = "plots"))]
    let _ = (matrix, normalized, out_dir);
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComparisonRow {
    #[serde(rename = "Study")]
    pub study: String,
    #[serde(rename = "Methodology")]
    pub methodology: String,
    #[serde(rename = "Accuracy")]
    pub accuracy_text: String,
    #[serde(rename = "Dataset")]
    pub dataset: String,
}

impl ComparisonRow {
    pub fn cells(&self) -> [&str; 4] {
        [&self.study, &self.methodology, &self.accuracy_text, &self.dataset]
    }

    fn validate(&self) -> Result<()> {
        if self.study.trim().is_empty() || self.accuracy_text.trim().is_empty() {
            return Err(Error::format("comparison row", "study and accuracy must be non-empty"));
        }
        Ok(())
    }

    /// Row describing a finished run, accuracy as a percentage with one decimal.
    pub fn from_metrics(study: &str, methodology: &str, dataset: &str, metrics: &MetricsReport) -> Self {
        let accuracy_text = match metrics.accuracy {
            Score::Defined(v) => format!("{:.1}%", v * 100.0),
            Score::Undefined => "undefined".to_string(),
        };
        ComparisonRow {
            study: study.to_string(),
            methodology: methodology.to_string(),
            accuracy_text,
            dataset: dataset.to_string(),
        }
    }
}

pub const COMPARISON_HEADER: [&str; 4] = ["Study", "Methodology", "Accuracy", "Dataset"];

pub fn parse_comparison_rows(text: &str) -> Result<Vec<ComparisonRow>> {
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let header = reader.headers().map_err(|e| Error::format("comparison rows", e))?;
    if header.iter().ne(COMPARISON_HEADER) {
        return Err(Error::format("comparison rows", format!("unexpected header {header:?}")));
    }
    let rows = reader
        .deserialize()
        .collect::<std::result::Result<Vec<ComparisonRow>, _>>()
        .map_err(|e| Error::format("comparison rows", e))?;
    for row in &rows {
        row.validate()?;
    }
    Ok(rows)
}

pub fn load_comparison_rows(path: Option<&Path>) -> Result<Vec<ComparisonRow>> {
    match path {
        Some(p) => parse_comparison_rows(&read_to_string(p)?)
            .map_err(|e| Error::format(p.display().to_string(), e.to_string())),
        None => parse_comparison_rows(BUNDLED_COMPARISON_ROWS),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TableFormat {
    Markdown,
    Csv,
}

pub fn emit_comparison_table(rows: &[ComparisonRow], format: TableFormat) -> Result<String> {
    if rows.is_empty() {
        return Err(Error::InvalidArgument("comparison table needs at least one row".into()));
    }
    match format {
        TableFormat::Markdown => {
            let mut out = String::new();
            let line = |out: &mut String, cells: [&str; 4]| {
                out.push('|');
                for c in cells {
                    let _ = write!(out, " {} |", c.replace('|', "\\|"));
                }
                out.push('\n');
            };
            line(&mut out, COMPARISON_HEADER);
            out.push_str("|---|---|---|---|\n");
            for row in rows {
                line(&mut out, row.cells());
            }
            Ok(out)
        }
        TableFormat::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            let err = |e: csv::Error| Error::format("comparison csv", e);
            w.write_record(COMPARISON_HEADER).map_err(err)?;
            for row in rows {
                w.write_record(row.cells()).map_err(err)?;
            }
            let bytes = w.into_inner().map_err(|e| Error::format("comparison csv", e.to_string()))?;
            String::from_utf8(bytes).map_err(|e| Error::format("comparison csv", e))
        }
    }
}

/// Cell text of a Markdown table produced by [`emit_comparison_table`], header included.
pub fn parse_markdown_cells(table: &str) -> Vec<Vec<String>> {
    table
        .lines()
        .filter(|l| l.starts_with('|') && !l.starts_with("|---"))
        .map(|l| {
            let inner = &l[1..l.len() - 1];
            let mut cells = Vec::new();
            let mut cur = String::new();
            let mut chars = inner.chars().peekable();
            while let Some(c) = chars.next() {
                match c {
                    '\\' if chars.peek() == Some(&'|') => {
                        cur.push('|');
                        chars.next();
                    }
                    '|' => cells.push(std::mem::take(&mut cur).trim().to_string()),
                    _ => cur.push(c),
                }
            }
            cells.push(cur.trim().to_string());
            cells
        })
        .collect()
}
