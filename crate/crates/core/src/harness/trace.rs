use std::io::Write;
use std::path::Path;

use serde::Serialize;

use crate::error::Result;

/// Column names of a trace file, in order.
pub const TRACE_HEADER: &str = "epoch,best_loss,alpha,forward_evals,grad_evals,wall_ms";

/// One epoch of a run as persisted to CSV.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TraceRow {
    pub epoch: usize,
    pub best_loss: f64,
    pub alpha: f64,
    pub forward_evals: u64,
    pub grad_evals: u64,
    pub wall_ms: u64,
}

#[derive(Serialize)]
struct LabelledRow<'a> {
    optimizer: &'a str,
    epoch: usize,
    best_loss: f64,
    alpha: f64,
    forward_evals: u64,
    grad_evals: u64,
    wall_ms: u64,
}

pub fn write_trace<W: Write>(rows: &[TraceRow], writer: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(writer);
    if rows.is_empty() {
        out.write_record(TRACE_HEADER.split(','))?;
    }
    for row in rows {
        out.serialize(row)?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_trace_file(rows: &[TraceRow], path: &Path) -> Result<()> {
    let file = std::fs::File::create(path)?;
    write_trace(rows, std::io::BufWriter::new(file))
}

/// Merged trace of several runs with a leading `optimizer` column.
pub fn write_merged<W: Write>(runs: &[(String, Vec<TraceRow>)], writer: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(writer);
    if runs.iter().all(|(_, rows)| rows.is_empty()) {
        out.write_record(std::iter::once("optimizer").chain(TRACE_HEADER.split(',')))?;
    }
    for (name, rows) in runs {
        for row in rows {
            out.serialize(LabelledRow {
                optimizer: name,
                epoch: row.epoch,
                best_loss: row.best_loss,
                alpha: row.alpha,
                forward_evals: row.forward_evals,
                grad_evals: row.grad_evals,
                wall_ms: row.wall_ms,
            })?;
        }
    }
    out.flush()?;
    Ok(())
}
