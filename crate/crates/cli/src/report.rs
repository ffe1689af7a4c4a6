//! Machine-readable run artifacts.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use pnl_core::datagen::Scenario;
use pnl_core::estimation::TrainingTrace;
use pnl_core::{MixingMatrix, Nonlinearity};
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::csvio::format_value;
use crate::error::{CliError, CliResult};

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

pub const TRACE_HEADER: &str = "iter,total,entropy_sum,log_det_w,log_deriv_mean";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub seed: u64,
    pub mixing: MixingMatrix,
    pub distortions: Vec<Nonlinearity>,
    pub scenario: Scenario,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub iter: usize,
    pub total: f64,
    pub entropy_sum: f64,
    pub log_det_w: f64,
    pub log_deriv_mean: f64,
    pub w_step: Option<f64>,
    pub g_step: Option<f64>,
}

impl TraceRow {
    pub fn rows(trace: &TrainingTrace) -> Vec<TraceRow> {
        trace
            .records
            .iter()
            .map(|r| TraceRow {
                iter: r.iter,
                total: r.contrast.total,
                entropy_sum: r.contrast.marginal_entropy_sum,
                log_det_w: r.contrast.log_det_w,
                log_deriv_mean: r.contrast.log_deriv_mean,
                w_step: r.w_step,
                g_step: r.g_step,
            })
            .collect()
    }
}

/// Separation quality against known sources.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub amari: f64,
    pub sir_db: Vec<f64>,
    pub mean_sir_db: f64,
    /// Output channel matched to each source.
    pub permutation: Vec<usize>,
    pub scales: Vec<f64>,
    pub global_map: Vec<Vec<f64>>,
}

impl Evaluation {
    pub fn summary(&self) -> String {
        let sir: Vec<String> = self.sir_db.iter().map(|v| format!("{v:.2}")).collect();
        format!(
            "amari={:.6} mean_sir_db={:.2} sir_db=[{}]",
            self.amari,
            self.mean_sir_db,
            sir.join(",")
        )
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub version: String,
    pub config: RunConfig,
    pub observations: String,
    pub channels: usize,
    pub samples: usize,
    pub converged: bool,
    pub iterations: usize,
    pub start: usize,
    pub start_contrasts: Vec<f64>,
    pub trace: Vec<TraceRow>,
    pub evaluation: Option<Evaluation>,
    pub wall_ms: u64,
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| CliError::BadInput(format!("cannot serialize {}: {e}", path.display())))?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| CliError::io(path, e))
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> CliResult<T> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::parse(path, e.line() as u64, e.to_string()))
}

pub fn write_trace_to<W: Write>(out: &mut W, trace: &TrainingTrace) -> std::io::Result<()> {
    writeln!(out, "{TRACE_HEADER}")?;
    for r in &trace.records {
        let c = &r.contrast;
        writeln!(
            out,
            "{},{},{},{},{}",
            r.iter,
            format_value(c.total),
            format_value(c.marginal_entropy_sum),
            format_value(c.log_det_w),
            format_value(c.log_deriv_mean)
        )?;
    }
    Ok(())
}

pub fn write_trace(path: &Path, trace: &TrainingTrace) -> CliResult<()> {
    let file = File::create(path).map_err(|e| CliError::io(path, e))?;
    let mut out = BufWriter::new(file);
    write_trace_to(&mut out, trace)
        .and_then(|_| out.flush())
        .map_err(|e| CliError::io(path, e))
}

/// Reads the `total` column of a trace file.
pub fn read_trace_totals(path: &Path) -> CliResult<Vec<f64>> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let mut lines = text.lines();
    if lines.next() != Some(TRACE_HEADER) {
        return Err(CliError::parse(
            path,
            1,
            format!("expected header {TRACE_HEADER:?}"),
        ));
    }
    lines
        .enumerate()
        .map(|(i, line)| {
            line.split(',')
                .nth(1)
                .and_then(|v| v.parse::<f64>().ok())
                .ok_or_else(|| CliError::parse(path, i as u64 + 2, "malformed trace row"))
        })
        .collect()
}
