use std::io::Write;

use serde::{Deserialize, Serialize};

use super::ClusterError;

pub const TRACE_HEADER: [&str; 9] =
    ["tick", "service_id", "completed", "p50_ms", "p95_ms", "util_cpu", "util_mem", "util_net", "queue_len"];

/// Per-service, per-tick record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub tick: u64,
    pub service_id: usize,
    pub completed: u64,
    pub p50_ms: f64,
    pub p95_ms: f64,
    /// CPU used over CPU allocated for the service's instances.
    pub util_cpu: f64,
    /// Service memory footprint over cluster memory.
    pub util_mem: f64,
    /// Service payload traffic over cluster network capacity.
    pub util_net: f64,
    pub queue_len: u64,
}

pub fn write_trace_csv<W: Write>(rows: &[TraceRow], out: W) -> Result<(), ClusterError> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record(TRACE_HEADER)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}
