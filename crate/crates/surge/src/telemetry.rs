//! Metric definitions, peak-memory tracking, and per-flush records.
//!
//! Peak memory here is *data-resident* accounting only: buffered text bytes
//! plus 4-byte-per-dimension embedding buffers. Runtime overhead (tokenizer
//! buffers, allocator slack, interpreter state) is deliberately excluded; a
//! constant `runtime_overhead` can be added for RSS-style comparisons but
//! never participates in acceptance checks.

use serde::{Deserialize, Serialize};

use crate::aggregator::FlushReason;
use crate::error::{Error, Result};

/// Structured log record emitted per flush (SuperBatch, chunk, bin, or
/// partition, depending on strategy).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlushRecord {
    pub index: u64,
    pub partition_count: u32,
    pub text_count: u64,
    /// Seconds the worker pool spent encoding this flush.
    pub t_enc: f64,
    /// Full charged span of the encode call (dispatch + encode + gather).
    pub t_call: f64,
    /// Serialize work seconds for this flush's partitions.
    pub t_ser: f64,
    /// Upload work seconds, retries and backoffs included.
    pub t_upl: f64,
    pub reason: FlushReason,
}

/// Aggregate metrics for one pipeline run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub strategy: String,
    pub total_texts: u64,
    /// texts per second: `total_texts / wall`.
    pub throughput: f64,
    pub wall: f64,
    /// Virtual time of the first completed partition upload.
    pub ttfo: f64,
    /// Peak data-resident bytes over the run.
    pub peak_data_mem: u64,
    /// I/O overlap ratio; absent for strategies that do not pipeline I/O
    /// per flush (PBP, FSB).
    pub rho: Option<f64>,
    /// Encode duty cycle: worker-pool encode seconds over wall seconds.
    pub delta: f64,
    /// Derived GPU utilization bound `delta * intensity`.
    pub gpu_util: f64,
    pub encode_calls: u64,
    pub flushes: u64,
    pub emergency_flushes: u64,
    /// Dollars per million texts at the configured hourly rate.
    pub cost_per_m: f64,
}

/// A timestamped data-resident allocation (+) or release (-).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MemEvent {
    pub at: f64,
    pub delta: i64,
}

/// Max over time of the running sum of live buffer bytes. Ties apply
/// allocations before releases, which is the conservative order.
pub fn track_peak_memory(events: &[MemEvent]) -> u64 {
    let mut sorted: Vec<MemEvent> = events.to_vec();
    sorted.sort_by(|a, b| a.at.total_cmp(&b.at).then(b.delta.cmp(&a.delta)));
    let mut live: i64 = 0;
    let mut peak: i64 = 0;
    for e in sorted {
        live += e.delta;
        peak = peak.max(live);
    }
    debug_assert!(peak >= 0);
    peak.max(0) as u64
}

/// Overlap ratio from flush totals for a blocking (sync) pipeline: how much
/// of the I/O time *could* hide behind encode spans. The first flush's call
/// has no preceding I/O to hide, so it is excluded from the overlappable
/// side; symmetric reasoning excludes the tail (the final flush's I/O has no
/// next encode), and on totals the two exclusions are interchangeable.
pub fn rho_capacity(records: &[FlushRecord]) -> Result<f64> {
    if records.is_empty() {
        return Err(Error::Config("rho requires at least one flush".into()));
    }
    let io: f64 = records.iter().map(|r| r.t_ser + r.t_upl).sum();
    if io <= 0.0 {
        return Ok(1.0);
    }
    let overlappable: f64 = records.iter().skip(1).map(|r| r.t_call).sum();
    Ok(1.0 - ((io - overlappable).max(0.0)) / io)
}

/// Overlap ratio actually achieved by a pipelined run: one minus the
/// fraction of I/O time left exposed on the critical path (the drain tail).
pub fn rho_achieved(records: &[FlushRecord], exposed_io: f64) -> Result<f64> {
    if records.is_empty() {
        return Err(Error::Config("rho requires at least one flush".into()));
    }
    let io: f64 = records.iter().map(|r| r.t_ser + r.t_upl).sum();
    if io <= 0.0 {
        return Ok(1.0);
    }
    Ok((1.0 - exposed_io.max(0.0) / io).clamp(0.0, 1.0))
}

/// Dollars per million texts: `wall/3600 * hourly_rate / (n/1e6)`.
pub fn cost_per_million(wall: f64, hourly_rate: f64, n: u64) -> Result<f64> {
    if wall.is_nan() || hourly_rate.is_nan() || wall <= 0.0 || hourly_rate <= 0.0 || n == 0 {
        return Err(Error::Config(
            "cost_per_million requires positive wall, rate, and N".into(),
        ));
    }
    Ok(wall / 3600.0 * hourly_rate / (n as f64 / 1e6))
}

/// Indices of flushes whose encode time exceeds twice the running average
/// of the flushes before them. Exported as a derived flag for downstream
/// alerting; nothing in-process acts on it.
pub fn encode_anomalies(records: &[FlushRecord]) -> Vec<u64> {
    let mut out = Vec::new();
    let mut sum = 0.0;
    for (i, r) in records.iter().enumerate() {
        if i > 0 {
            let avg = sum / i as f64;
            if r.t_enc > 2.0 * avg {
                out.push(r.index);
            }
        }
        sum += r.t_enc;
    }
    out
}

/// Serialize flush records as JSON-lines.
pub fn records_to_jsonl(records: &[FlushRecord]) -> Result<String> {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r)?);
        out.push('\n');
    }
    Ok(out)
}
