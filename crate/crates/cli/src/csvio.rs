//! Signal blocks as CSV: a `ch1,...,chC` header, then one row per sample.
//! Values are written in scientific notation with 17 significant digits,
//! which reads back to the identical `f64`.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use ndarray::Array2;
use pnl_core::{Role, SignalBlock};

use crate::error::{CliError, CliResult};

pub fn format_value(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn write_block_to<W: Write>(out: &mut W, block: &SignalBlock) -> std::io::Result<()> {
    let header: Vec<String> = (1..=block.channels()).map(|c| format!("ch{c}")).collect();
    writeln!(out, "{}", header.join(","))?;
    let data = block.data();
    let mut line = String::new();
    for t in 0..block.samples() {
        line.clear();
        for c in 0..block.channels() {
            if c > 0 {
                line.push(',');
            }
            line.push_str(&format_value(data[[c, t]]));
        }
        line.push('\n');
        out.write_all(line.as_bytes())?;
    }
    Ok(())
}

pub fn write_block(path: &Path, block: &SignalBlock) -> CliResult<()> {
    let file = File::create(path).map_err(|e| CliError::io(path, e))?;
    let mut out = BufWriter::new(file);
    write_block_to(&mut out, block)
        .and_then(|_| out.flush())
        .map_err(|e| CliError::io(path, e))
}

/// Reads a block written by [`write_block`]. Parse failures report the
/// 1-based line number in the file.
pub fn read_block(path: &Path, role: Role) -> CliResult<SignalBlock> {
    let file = File::open(path).map_err(|e| CliError::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(file);
    let header = reader.headers().map_err(|e| csv_error(path, e))?.clone();
    let channels = header.len();
    for (i, name) in header.iter().enumerate() {
        if name.trim() != format!("ch{}", i + 1) {
            return Err(CliError::parse(
                path,
                1,
                format!("expected header column ch{}, found {name:?}", i + 1),
            ));
        }
    }
    let mut columns: Vec<Vec<f64>> = vec![Vec::new(); channels];
    for record in reader.records() {
        let record = record.map_err(|e| csv_error(path, e))?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != channels {
            return Err(CliError::parse(
                path,
                line,
                format!("expected {channels} fields, found {}", record.len()),
            ));
        }
        for (c, field) in record.iter().enumerate() {
            let v: f64 = field.trim().parse().map_err(|_| {
                CliError::parse(
                    path,
                    line,
                    format!("column ch{}: not a number: {field:?}", c + 1),
                )
            })?;
            if !v.is_finite() {
                return Err(CliError::parse(
                    path,
                    line,
                    format!("column ch{}: non-finite value {field:?}", c + 1),
                ));
            }
            columns[c].push(v);
        }
    }
    let samples = columns.first().map_or(0, Vec::len);
    if samples == 0 {
        return Err(CliError::parse(path, 2, "no samples"));
    }
    let data = Array2::from_shape_fn((channels, samples), |(c, t)| columns[c][t]);
    Ok(SignalBlock::new(data, role)?)
}

fn csv_error(path: &Path, e: csv::Error) -> CliError {
    let line = e.position().map_or(0, |p| p.line());
    match e.into_kind() {
        csv::ErrorKind::Io(io) => CliError::io(path, io),
        kind => CliError::parse(path, line, format!("{kind:?}")),
    }
}
