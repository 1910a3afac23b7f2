//! Exact round-trip CSV for run traces.
//!
//! Layout: `# key=value` metadata comment lines, one header row, then one row
//! per iteration with columns `k,grad_norm,gap,step_size,dist_to_opt,step_len`
//! (`dist_to_opt` empty when the optimum is unknown). Floats are written with
//! Rust's shortest round-trip formatting, so `write -> read` reproduces the
//! original `f64` bits and a byte-wise comparison of two files is a valid
//! equality test for two traces.

use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::optimizers::IterRow;

pub const TRACE_HEADER: &str = "k,grad_norm,gap,step_size,dist_to_opt,step_len";

/// Shortest decimal representation that parses back to the same bits.
pub fn format_f64(v: f64) -> String {
    v.to_string()
}

/// Fixed 17-significant-digit scientific form, for `--exact` style output
/// where padding matters more than brevity.
pub fn format_f64_exact(v: f64) -> String {
    format!("{v:.16e}")
}

fn parse_f64(field: &str, line_no: usize) -> Result<f64> {
    field.parse::<f64>().map_err(|_| {
        Error::Format(format!("line {line_no}: invalid float {field:?}"))
    })
}

/// Write metadata comments, header and rows.
pub fn write_trace<W: Write>(
    out: &mut W,
    meta: &[(String, String)],
    rows: &[IterRow],
) -> Result<()> {
    for (key, value) in meta {
        if key.contains('=') || key.contains('\n') || value.contains('\n') {
            return Err(Error::Format(format!(
                "metadata key/value must not contain '=' in key or newlines: {key:?}"
            )));
        }
        writeln!(out, "# {key}={value}")?;
    }
    writeln!(out, "{TRACE_HEADER}")?;
    for row in rows {
        let dist = row
            .dist_to_opt
            .map(|d| format_f64(d))
            .unwrap_or_default();
        writeln!(
            out,
            "{},{},{},{},{},{}",
            row.k,
            format_f64(row.grad_norm),
            format_f64(row.gap),
            format_f64(row.step_size),
            dist,
            format_f64(row.step_len),
        )?;
    }
    Ok(())
}

/// Render a trace to an in-memory string (used for byte-wise comparisons and
/// by the file writer).
pub fn trace_to_string(meta: &[(String, String)], rows: &[IterRow]) -> Result<String> {
    let mut buf = Vec::new();
    write_trace(&mut buf, meta, rows)?;
    String::from_utf8(buf).map_err(|e| Error::Format(e.to_string()))
}

/// Parse a trace written by [`write_trace`].
pub fn read_trace<R: Read>(input: R) -> Result<(Vec<(String, String)>, Vec<IterRow>)> {
    let reader = BufReader::new(input);
    let mut meta = Vec::new();
    let mut rows = Vec::new();
    let mut saw_header = false;
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        let line_no = idx + 1;
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix('#') {
            if saw_header {
                return Err(Error::Format(format!(
                    "line {line_no}: metadata after header"
                )));
            }
            let rest = rest.strip_prefix(' ').unwrap_or(rest);
            let (key, value) = rest.split_once('=').ok_or_else(|| {
                Error::Format(format!("line {line_no}: metadata without '='"))
            })?;
            meta.push((key.to_string(), value.to_string()));
            continue;
        }
        if !saw_header {
            if line != TRACE_HEADER {
                return Err(Error::Format(format!(
                    "line {line_no}: expected header {TRACE_HEADER:?}, got {line:?}"
                )));
            }
            saw_header = true;
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 6 {
            return Err(Error::Format(format!(
                "line {line_no}: expected 6 columns, got {}",
                fields.len()
            )));
        }
        let k = fields[0]
            .parse::<usize>()
            .map_err(|_| Error::Format(format!("line {line_no}: invalid index {:?}", fields[0])))?;
        let dist_to_opt = if fields[4].is_empty() {
            None
        } else {
            Some(parse_f64(fields[4], line_no)?)
        };
        rows.push(IterRow {
            k,
            grad_norm: parse_f64(fields[1], line_no)?,
            gap: parse_f64(fields[2], line_no)?,
            step_size: parse_f64(fields[3], line_no)?,
            dist_to_opt,
            step_len: parse_f64(fields[5], line_no)?,
        });
    }
    if !saw_header {
        return Err(Error::Format("missing trace header".into()));
    }
    Ok((meta, rows))
}

pub fn write_trace_file(
    path: &Path,
    meta: &[(String, String)],
    rows: &[IterRow],
) -> Result<()> {
    let rendered = trace_to_string(meta, rows)?;
    fs::write(path, rendered)?;
    Ok(())
}

pub fn read_trace_file(path: &Path) -> Result<(Vec<(String, String)>, Vec<IterRow>)> {
    let file = fs::File::open(path)?;
    read_trace(file)
}
