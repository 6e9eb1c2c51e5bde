//! CSV trace and JSON sidecars.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::Serialize;

use super::{EventRecord, Outcome, SimulationTrace};
use crate::error::{Error, Result};

fn csv_err(e: csv::Error) -> Error {
    Error::Io(e.to_string())
}

pub fn trace_header(n: usize) -> Vec<String> {
    let mut h = vec!["t".to_string(), "u_L".to_string()];
    for prefix in ["i", "u", "di", "du"] {
        h.extend((1..=n).map(|k| format!("{prefix}_{k}")));
    }
    h
}

/// One row per recorded sample: t, u_L, i, u, di, du.
pub fn write_trace_csv<W: Write>(trace: &SimulationTrace, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(trace_header(trace.n())).map_err(csv_err)?;
    for s in &trace.samples {
        let mut row = Vec::with_capacity(2 + 4 * trace.n());
        row.push(s.t);
        row.push(s.bus_voltage);
        row.extend(&s.currents);
        row.extend(&s.voltages);
        row.extend(&s.di);
        row.extend(&s.du);
        w.write_record(row.iter().map(|v| v.to_string())).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_event_log<W: Write>(events: &[EventRecord], out: W) -> Result<()> {
    serde_json::to_writer_pretty(out, events).map_err(|e| Error::Io(e.to_string()))
}

#[derive(Debug, Clone, Serialize)]
pub struct TraceSummary {
    pub outcome: Outcome,
    pub stop_time: f64,
    pub stop_reason: Option<String>,
    pub final_bus_voltage: Option<f64>,
    /// i_j / k_j at the last sample.
    pub final_current_ratios: Vec<f64>,
    pub final_voltage_error: Option<f64>,
    pub final_sharing_error: Option<f64>,
    pub max_power_residual: f64,
    pub events: Vec<EventRecord>,
}

impl TraceSummary {
    pub fn of(trace: &SimulationTrace) -> Self {
        let last = trace.last();
        TraceSummary {
            outcome: trace.outcome,
            stop_time: trace.stop_time,
            stop_reason: trace.stop_reason.clone(),
            final_bus_voltage: last.map(|s| s.bus_voltage),
            final_current_ratios: last
                .map(|s| s.currents.iter().zip(&trace.k).map(|(i, k)| i / k).collect())
                .unwrap_or_default(),
            final_voltage_error: last.map(|s| s.voltage_error(trace.v_ref)),
            final_sharing_error: last.map(|s| s.sharing_error(&trace.k)),
            max_power_residual: trace.max_power_residual,
            events: trace.events.clone(),
        }
    }
}

pub fn write_summary(trace: &SimulationTrace, path: &Path) -> Result<()> {
    let file = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(file, &TraceSummary::of(trace)).map_err(|e| Error::Io(e.to_string()))
}
