use std::io::Read;

use serde::{Deserialize, Serialize};

use super::{CacheError, CacheHierarchy, CacheStats};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TraceOp {
    Get,
    Put,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub tick: f64,
    pub op: TraceOp,
    pub key: String,
}

/// Parses `tick,op,key` rows (with header).
pub fn read_trace_csv<R: Read>(input: R) -> Result<Vec<TraceRecord>, CacheError> {
    let mut r = csv::Reader::from_reader(input);
    let mut out = Vec::new();
    for (i, rec) in r.deserialize().enumerate() {
        let rec: TraceRecord = rec.map_err(|e| CacheError::BadTrace(format!("row {}: {e}", i + 1)))?;
        out.push(rec);
    }
    Ok(out)
}

/// Applies a trace to the cache; a put stores `key@tick` as the value.
/// Ticks are seconds.
pub fn replay(cache: &mut CacheHierarchy, trace: &[TraceRecord]) -> Result<CacheStats, CacheError> {
    for r in trace {
        match r.op {
            TraceOp::Get => {
                cache.get(r.key.as_bytes(), r.tick, None);
            }
            TraceOp::Put => {
                let v = format!("{}@{}", r.key, r.tick);
                cache.put(r.key.as_bytes(), v.as_bytes(), r.tick)?;
            }
        }
    }
    Ok(cache.stats())
}
