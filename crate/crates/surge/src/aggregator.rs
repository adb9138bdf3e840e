//! Streaming two-threshold SuperBatch accumulation.
//!
//! Rows arrive grouped by partition key. Completed partitions are appended
//! whole (never split) to the current SuperBatch; the batch flushes when the
//! running text count crosses `B_min` (efficiency trigger, the common path)
//! or `B_max` (memory-safety trigger, rare). The buffered total therefore
//! never exceeds `B_min + n_max`, where `n_max` is the largest partition
//! seen so far, regardless of partition arrival order.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::workload::PartitionKey;

/// The efficiency trigger `B_min` and safety trigger `B_max`, in texts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Thresholds {
    pub b_min: u64,
    pub b_max: u64,
}

impl Thresholds {
    pub const DEFAULT: Thresholds = Thresholds {
        b_min: 100_000,
        b_max: 500_000,
    };

    pub fn new(b_min: u64, b_max: u64) -> Result<Self> {
        if b_min == 0 || b_min >= b_max {
            return Err(Error::Config(format!(
                "thresholds require 0 < B_min < B_max, got ({b_min}, {b_max})"
            )));
        }
        Ok(Self { b_min, b_max })
    }
}

impl Default for Thresholds {
    fn default() -> Self {
        Self::DEFAULT
    }
}

/// Which trigger produced a flush.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FlushReason {
    /// Total crossed `B_min`.
    Efficiency,
    /// Total crossed `B_max` in a single append. Checked first.
    Safety,
    /// Residual buffer at end of stream; may be smaller than `B_min`.
    EndOfStream,
}

/// Partition contents as buffered by the aggregator.
#[derive(Debug, Clone, PartialEq)]
pub enum PartitionPayload {
    /// Metered: text count and total byte length only. O(1) memory.
    Metered { n: u64, bytes: u64 },
    /// Materialized text rows.
    Texts(Vec<Vec<u8>>),
}

impl PartitionPayload {
    pub fn len(&self) -> u64 {
        match self {
            PartitionPayload::Metered { n, .. } => *n,
            PartitionPayload::Texts(t) => t.len() as u64,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn byte_len(&self) -> u64 {
        match self {
            PartitionPayload::Metered { bytes, .. } => *bytes,
            PartitionPayload::Texts(t) => t.iter().map(|x| x.len() as u64).sum(),
        }
    }
}

/// One buffered partition inside a SuperBatch.
#[derive(Debug, Clone, PartialEq)]
pub struct PartitionEntry {
    pub key: PartitionKey,
    pub payload: PartitionPayload,
}

/// Row range of one partition within a SuperBatch's embedding matrix.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PartitionBounds {
    pub start: u64,
    pub end: u64,
    pub key: PartitionKey,
}

/// Whole partitions accumulated for a single encode call, with the row
/// ranges needed to slice the result back apart.
#[derive(Debug, Clone, PartialEq)]
pub struct SuperBatch {
    pub entries: Vec<PartitionEntry>,
    pub bounds: Vec<PartitionBounds>,
    pub total: u64,
}

impl SuperBatch {
    pub fn total_bytes(&self) -> u64 {
        self.entries.iter().map(|e| e.payload.byte_len()).sum()
    }

    pub fn partition_count(&self) -> usize {
        self.entries.len()
    }
}

/// A flush handed to the encode/serialize/upload stages. Immutable once
/// produced; safe to move to another executor.
#[derive(Debug, Clone, PartialEq)]
pub struct FlushRequest {
    pub batch: SuperBatch,
    pub reason: FlushReason,
}

/// A single row as fed to [`SurgeAggregator::ingest_row`].
#[derive(Debug, Clone)]
pub enum Row {
    /// Metered: byte length only.
    Metered(u32),
    /// Materialized text bytes.
    Text(Vec<u8>),
}

/// The streaming aggregator. Single-threaded; one producer drives
/// `ingest_row`/`add_partition` and `finalize`.
#[derive(Debug)]
pub struct SurgeAggregator {
    thresholds: Thresholds,
    partitions: Vec<PartitionEntry>,
    bounds: Vec<PartitionBounds>,
    total: u64,
    /// Largest completed-partition size seen so far.
    n_max_seen: u64,
    cur_key: Option<PartitionKey>,
    cur_metered: (u64, u64),
    cur_texts: Vec<Vec<u8>>,
    seen: HashSet<PartitionKey>,
    finalized: bool,
}

impl SurgeAggregator {
    pub fn new(thresholds: Thresholds) -> Self {
        SurgeAggregator {
            thresholds,
            partitions: Vec::new(),
            bounds: Vec::new(),
            total: 0,
            n_max_seen: 0,
            cur_key: None,
            cur_metered: (0, 0),
            cur_texts: Vec::new(),
            seen: HashSet::new(),
            finalized: false,
        }
    }

    pub fn thresholds(&self) -> Thresholds {
        self.thresholds
    }

    /// Texts currently buffered (completed partitions plus the partition
    /// being assembled).
    pub fn buffered_total(&self) -> u64 {
        self.total + self.cur_metered.0 + self.cur_texts.len() as u64
    }

    /// Texts buffered in completed, not-yet-flushed partitions.
    pub fn pending_total(&self) -> u64 {
        self.total
    }

    pub fn n_max_seen(&self) -> u64 {
        self.n_max_seen
    }

    /// Buffer one row. When the key changes, the previous partition is
    /// complete and is appended to the SuperBatch, which may flush.
    ///
    /// Keys must arrive grouped: a key reappearing after a different key is
    /// a hard error naming both keys.
    pub fn ingest_row(&mut self, key: &PartitionKey, row: Row) -> Result<Option<FlushRequest>> {
        if self.finalized {
            return Err(Error::DoubleFinalize);
        }
        let mut flush = None;
        if self.cur_key.as_ref() != Some(key) {
            if self.seen.contains(key) {
                return Err(Error::OutOfOrderKey {
                    key: key.to_string(),
                    current: self
                        .cur_key
                        .as_ref()
                        .map(|k| k.to_string())
                        .unwrap_or_else(|| "<none>".into()),
                });
            }
            flush = self.complete_current()?;
            self.cur_key = Some(key.clone());
            self.seen.insert(key.clone());
        }
        match row {
            Row::Metered(len) => {
                self.cur_metered.0 += 1;
                self.cur_metered.1 += len as u64;
            }
            Row::Text(bytes) => self.cur_texts.push(bytes),
        }
        Ok(flush)
    }

    fn complete_current(&mut self) -> Result<Option<FlushRequest>> {
        let Some(key) = self.cur_key.take() else {
            return Ok(None);
        };
        // A partition's rows are either all metered or all materialized.
        if !self.cur_texts.is_empty() && self.cur_metered.0 > 0 {
            return Err(Error::Config(format!(
                "partition {key} mixes metered and materialized rows"
            )));
        }
        let payload = if self.cur_texts.is_empty() {
            let (n, bytes) = std::mem::take(&mut self.cur_metered);
            PartitionPayload::Metered { n, bytes }
        } else {
            PartitionPayload::Texts(std::mem::take(&mut self.cur_texts))
        };
        self.cur_metered = (0, 0);
        Ok(self.add_partition(key, payload))
    }

    /// Append a complete partition, whole. Returns a flush request iff the
    /// running total crossed a threshold; the safety trigger is checked
    /// before the efficiency trigger.
    pub fn add_partition(
        &mut self,
        key: PartitionKey,
        payload: PartitionPayload,
    ) -> Option<FlushRequest> {
        let n = payload.len();
        let start = self.total;
        self.bounds.push(PartitionBounds {
            start,
            end: start + n,
            key: key.clone(),
        });
        self.partitions.push(PartitionEntry { key, payload });
        self.total += n;
        self.n_max_seen = self.n_max_seen.max(n);

        if self.total >= self.thresholds.b_max {
            Some(self.flush(FlushReason::Safety))
        } else if self.total >= self.thresholds.b_min {
            Some(self.flush(FlushReason::Efficiency))
        } else {
            None
        }
    }

    fn flush(&mut self, reason: FlushReason) -> FlushRequest {
        let batch = SuperBatch {
            entries: std::mem::take(&mut self.partitions),
            bounds: std::mem::take(&mut self.bounds),
            total: std::mem::replace(&mut self.total, 0),
        };
        FlushRequest { batch, reason }
    }

    /// End of stream: completes the in-progress partition and flushes any
    /// residual buffer with reason `EndOfStream`. Erroring on a second call
    /// guards against double-counted tails.
    pub fn finalize(&mut self) -> Result<Option<FlushRequest>> {
        if self.finalized {
            return Err(Error::DoubleFinalize);
        }
        let early = self.complete_current()?;
        self.finalized = true;
        if let Some(f) = early {
            // The last partition itself crossed a threshold; nothing remains.
            debug_assert_eq!(self.total, 0);
            return Ok(Some(f));
        }
        if self.total == 0 {
            return Ok(None);
        }
        Ok(Some(self.flush(FlushReason::EndOfStream)))
    }
}
