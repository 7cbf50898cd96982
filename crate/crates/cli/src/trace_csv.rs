//! Fixed-schema CSV traces, one row per simulation step.

use std::io::{Read, Write};

use cartpush_core::{SimTrace, TraceRecord};
use serde::Deserialize;

use crate::error::{CliError, CliResult};

pub const HEADER: [&str; 25] = [
    "t",
    "v_cmd",
    "w_cmd",
    "x",
    "y",
    "theta",
    "v_x",
    "omega",
    "phi_x_cmd",
    "phi_y_cmd",
    "phi_x",
    "phi_y",
    "beta",
    "fL_x",
    "fL_y",
    "fR_x",
    "fR_y",
    "f_p",
    "tau",
    "m_hat",
    "px_hat",
    "py_hat",
    "I_hat",
    "sigma_hat",
    "disturbed",
];

/// One parsed trace row.
#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
pub struct TraceRow {
    pub t: f64,
    pub v_cmd: f64,
    pub w_cmd: f64,
    pub x: f64,
    pub y: f64,
    pub theta: f64,
    pub v_x: f64,
    pub omega: f64,
    pub phi_x_cmd: f64,
    pub phi_y_cmd: f64,
    pub phi_x: f64,
    pub phi_y: f64,
    pub beta: f64,
    #[serde(rename = "fL_x")]
    pub fl_x: f64,
    #[serde(rename = "fL_y")]
    pub fl_y: f64,
    #[serde(rename = "fR_x")]
    pub fr_x: f64,
    #[serde(rename = "fR_y")]
    pub fr_y: f64,
    pub f_p: f64,
    pub tau: f64,
    pub m_hat: f64,
    pub px_hat: f64,
    pub py_hat: f64,
    #[serde(rename = "I_hat")]
    pub i_hat: f64,
    pub sigma_hat: f64,
    pub disturbed: u8,
}

fn num(v: f64) -> String {
    format!("{v:.9e}")
}

fn row(r: &TraceRecord) -> [String; 25] {
    let e = &r.estimate;
    let h = &r.handles;
    [
        num(r.t),
        num(r.v_cmd),
        num(r.w_cmd),
        num(r.state.x),
        num(r.state.y),
        num(r.state.theta),
        num(r.state.v_x),
        num(r.state.omega),
        num(r.lean_cmd.phi_x),
        num(r.lean_cmd.phi_y),
        num(r.lean.x),
        num(r.lean.y),
        num(r.beta),
        num(h.f_left.x),
        num(h.f_left.y),
        num(h.f_right.x),
        num(h.f_right.y),
        num(r.wrench.f_p),
        num(r.wrench.tau),
        num(e.m_w),
        num(e.p_x),
        num(e.p_y),
        num(e.i_w),
        num(e.sigma),
        u8::from(r.disturbed).to_string(),
    ]
}

pub fn write_trace<W: Write>(out: W, trace: &SimTrace) -> CliResult<()> {
    let mut w = csv::Writer::from_writer(out);
    let io = |e: csv::Error| CliError::Io(format!("writing trace: {e}"));
    w.write_record(HEADER).map_err(io)?;
    for r in &trace.records {
        w.write_record(row(r)).map_err(io)?;
    }
    w.flush().map_err(|e| CliError::io("writing trace", e))
}

/// Reads a trace, checking the header and that `t` strictly increases.
pub fn read_trace<R: Read>(input: R) -> CliResult<Vec<TraceRow>> {
    let mut rd = csv::Reader::from_reader(input);
    let header = rd.headers().map_err(|e| CliError::Schema(format!("unreadable header: {e}")))?;
    if header.iter().ne(HEADER.iter().copied()) {
        return Err(CliError::Schema(format!(
            "header mismatch: expected {}, found {}",
            HEADER.join(","),
            header.iter().collect::<Vec<_>>().join(",")
        )));
    }
    let mut rows: Vec<TraceRow> = Vec::new();
    for rec in rd.deserialize() {
        let row: TraceRow = rec.map_err(|e| {
            let line = e.position().map_or(String::new(), |p| format!("line {}: ", p.line()));
            CliError::Schema(format!("{line}{e}"))
        })?;
        if let Some(prev) = rows.last() {
            if !(row.t > prev.t) {
                return Err(CliError::Schema(format!(
                    "line {}: t must strictly increase ({} after {})",
                    rows.len() + 2,
                    row.t,
                    prev.t
                )));
            }
        }
        rows.push(row);
    }
    Ok(rows)
}
