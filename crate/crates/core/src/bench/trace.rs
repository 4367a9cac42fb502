use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use super::LossTrace;
use crate::error::{Error, Result};

pub const TRACE_HEADER: &str = "step,loss,wall_ms,t_l,t_r,root_residual";
pub const REGRET_HEADER: &str = "step,loss,cumulative_regret";

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io { path: path.to_path_buf(), source }
}

fn lines_to(out: &mut impl Write, header: &str, lines: impl Iterator<Item = String>) -> std::io::Result<()> {
    writeln!(out, "{header}")?;
    for line in lines {
        writeln!(out, "{line}")?;
    }
    out.flush()
}

fn to_file(path: &Path, body: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>) -> Result<()> {
    let file = File::create(path).map_err(io_err(path))?;
    body(&mut BufWriter::new(file)).map_err(io_err(path))
}

fn trace_lines(trace: &LossTrace) -> impl Iterator<Item = String> + '_ {
    trace.rows.iter().map(|r| {
        format!(
            "{},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
            r.step, r.loss, r.wall_ms, r.t_l, r.t_r, r.root_residual
        )
    })
}

fn regret_lines(trace: &LossTrace) -> impl Iterator<Item = String> + '_ {
    let losses = trace.rows.iter().filter(|r| r.step > 0 && r.loss.is_finite());
    losses.filter_map(|r| {
        let reg = trace.regret.get(r.step - 1)?;
        Some(format!("{},{:.16e},{:.16e}", r.step, r.loss, reg))
    })
}

/// Streams the trace as CSV with 17 significant digits per value.
pub fn write_trace_to(trace: &LossTrace, out: &mut impl Write) -> std::io::Result<()> {
    lines_to(out, TRACE_HEADER, trace_lines(trace))
}

pub fn write_trace(trace: &LossTrace, path: &Path) -> Result<()> {
    to_file(path, |out| write_trace_to(trace, out))
}

/// Streams per-step loss and cumulative regret of a least-squares run.
pub fn write_regret_to(trace: &LossTrace, out: &mut impl Write) -> std::io::Result<()> {
    lines_to(out, REGRET_HEADER, regret_lines(trace))
}

pub fn write_regret(trace: &LossTrace, path: &Path) -> Result<()> {
    to_file(path, |out| write_regret_to(trace, out))
}
