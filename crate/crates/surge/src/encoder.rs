//! Pluggable encode interface and the cost-model-driven virtual encoder.
//!
//! The virtual encoder stands in for a multi-process GPU pool: it charges
//! `c_ipc + n * c_enc / G` of virtual time per call and synthesizes
//! deterministic L2-normalized embeddings from `(key, row)` hashes, so file
//! bytes are reproducible across runs and across batching strategies.
//!
//! A call's charged span covers host-side dispatch, the GPU work, and result
//! gathering; the fraction of it the worker pool spends actually encoding is
//! `gpu_fraction`, which is what per-flush telemetry reports as encode time.

use serde::{Deserialize, Serialize};

use crate::aggregator::SuperBatch;
use crate::costmodel::{CostParams, Preset};
use crate::error::{Error, Result};
use crate::workload::PartitionKey;
use std::sync::Arc;

/// Everything the virtual encoder needs to know about the model/hardware pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EncoderProfile {
    pub cost: CostParams,
    /// Embedding dimension.
    pub dims: u32,
    /// Compute intensity: kernel time over total in-worker time. Reported
    /// via `gpu_util_bound`, never decomposed further.
    pub intensity: f64,
    /// Per-GPU micro-batch size. Recorded for real-backend adapters; the
    /// virtual timing model has no batch-size term.
    pub per_gpu_batch: u32,
    /// Coefficient of variation of the seeded log-normal noise factor on
    /// call durations. 0 = deterministic.
    pub noise_cv: f64,
    /// Fraction of a call's charged span during which the worker pool is
    /// busy encoding (vs. host-side dispatch/gather). Feeds duty-cycle
    /// telemetry.
    pub gpu_fraction: f64,
    /// Optional per-partition bookkeeping cost charged to the main thread,
    /// seconds. Default 0.
    pub per_partition_overhead: f64,
}

impl EncoderProfile {
    pub fn from_preset(preset: Preset) -> Self {
        EncoderProfile {
            cost: preset.cost(),
            dims: preset.dims(),
            intensity: match preset {
                Preset::L4x4Minilm | Preset::L4x2Minilm => 0.186,
                Preset::L4x2Bge => 0.45,
            },
            per_gpu_batch: match preset {
                Preset::L4x2Bge => 512,
                _ => 1024,
            },
            noise_cv: 0.0,
            gpu_fraction: 0.574,
            per_partition_overhead: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dims == 0 || self.per_gpu_batch == 0 {
            return Err(Error::Config("dims and per_gpu_batch must be >= 1".into()));
        }
        if self.noise_cv < 0.0 {
            return Err(Error::Config("noise_cv must be >= 0".into()));
        }
        if !(0.0..=1.0).contains(&self.gpu_fraction) || !(0.0..=1.0).contains(&self.intensity) {
            return Err(Error::Config(
                "gpu_fraction and intensity must be in [0,1]".into(),
            ));
        }
        if self.per_partition_overhead < 0.0 {
            return Err(Error::Config("per_partition_overhead must be >= 0".into()));
        }
        Ok(())
    }
}

/// Row-major float32 embedding storage.
#[derive(Debug, Clone)]
enum MatrixStore {
    /// Real data; shared so views never copy.
    Dense(Arc<Vec<f32>>),
    /// Metered runs: rows exist logically and can be regenerated on demand,
    /// but no buffer is held.
    Virtual,
}

/// An `n x d` row-major float32 matrix. Immutable after encode; rows are
/// L2-normalized to 1 +- 1e-5.
#[derive(Debug, Clone)]
pub struct EmbeddingMatrix {
    rows: u64,
    dims: u32,
    /// Partition key the rows were derived from (content seed).
    key: PartitionKey,
    store: MatrixStore,
}

impl EmbeddingMatrix {
    /// Wrap an existing dense buffer (deserialization, adapters).
    pub fn from_dense(key: PartitionKey, rows: u64, dims: u32, data: Vec<f32>) -> Self {
        debug_assert_eq!(data.len() as u64, rows * dims as u64);
        EmbeddingMatrix {
            rows,
            dims,
            key,
            store: MatrixStore::Dense(Arc::new(data)),
        }
    }

    pub fn rows(&self) -> u64 {
        self.rows
    }

    pub fn dims(&self) -> u32 {
        self.dims
    }

    pub fn is_dense(&self) -> bool {
        matches!(self.store, MatrixStore::Dense(_))
    }

    /// The whole backing buffer, when dense.
    pub fn data(&self) -> Option<&[f32]> {
        match &self.store {
            MatrixStore::Dense(d) => Some(d.as_slice()),
            MatrixStore::Virtual => None,
        }
    }

    /// O(1), copy-free view over `start..end` rows.
    pub fn slice(&self, start: u64, end: u64) -> Result<MatrixView> {
        if start > end || end > self.rows {
            return Err(Error::SliceOutOfBounds {
                start: start as usize,
                end: end as usize,
                rows: self.rows as usize,
            });
        }
        Ok(MatrixView {
            matrix: self.clone(),
            start,
            end,
        })
    }

    /// Data-resident bytes this matrix models: 4 per dimension per row. A
    /// virtual matrix holds no buffer but still charges this to the memory
    /// tracker, since a real run would.
    pub fn modeled_bytes(&self) -> u64 {
        self.rows * self.dims as u64 * 4
    }
}

/// A row-range view into an [`EmbeddingMatrix`]. Creating one copies no
/// embedding data; the parent buffer stays alive for as long as any view
/// (for example one captured by a pending upload) references it.
#[derive(Debug, Clone)]
pub struct MatrixView {
    matrix: EmbeddingMatrix,
    start: u64,
    end: u64,
}

impl MatrixView {
    pub fn rows(&self) -> u64 {
        self.end - self.start
    }

    pub fn dims(&self) -> u32 {
        self.matrix.dims
    }

    /// Contiguous float range of the parent buffer, when dense.
    pub fn as_slice(&self) -> Option<&[f32]> {
        let d = self.matrix.dims as u64;
        self.matrix
            .data()
            .map(|data| &data[(self.start * d) as usize..(self.end * d) as usize])
    }

    /// Owned row values regardless of storage. Dense views should prefer
    /// [`Self::as_slice`]; this is the fallback for virtual matrices, which
    /// regenerate the same deterministic content.
    pub fn materialize(&self) -> Vec<f32> {
        match self.as_slice() {
            Some(s) => s.to_vec(),
            None => {
                let d = self.matrix.dims;
                let mut out = Vec::with_capacity((self.rows() * d as u64) as usize);
                for row in self.start..self.end {
                    fill_row(&mut out, &self.matrix.key, row, d);
                }
                out
            }
        }
    }
}

/// Timing of one encode call.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EncodeTiming {
    /// Full charged span on the calling thread: dispatch + encode + gather.
    pub charged: f64,
    /// Portion of the span the worker pool spent encoding.
    pub gpu_busy: f64,
}

/// Result of one encode call.
#[derive(Debug, Clone)]
pub struct EncodeOutcome {
    pub matrix: EmbeddingMatrix,
    pub timing: EncodeTiming,
}

/// Anything that can stand in for the multi-process encoder pool. The
/// virtual encoder is the only implementation shipped; a real backend plugs
/// in behind the same call shape.
pub trait Encoder {
    /// Encode `n` rows derived from `key`. `n >= 1`.
    fn encode_rows(&mut self, key: &PartitionKey, n: u64, dense: bool) -> Result<EncodeOutcome>;
}

/// The analytically-timed virtual encoder. Exclusive resource: one call in
/// flight at a time (enforced by `&mut self`).
#[derive(Debug)]
pub struct VirtualEncoder {
    profile: EncoderProfile,
    noise_seed: u64,
    calls: u64,
    warmed: bool,
}

impl VirtualEncoder {
    pub fn new(profile: EncoderProfile, noise_seed: u64) -> Result<Self> {
        profile.validate()?;
        Ok(VirtualEncoder {
            profile,
            noise_seed,
            calls: 0,
            warmed: false,
        })
    }

    pub fn profile(&self) -> &EncoderProfile {
        &self.profile
    }

    /// One untimed call that models CUDA context/process-pool warmup. Runs
    /// before the clock starts; idempotent.
    pub fn warmup(&mut self) {
        self.warmed = true;
    }

    pub fn is_warmed(&self) -> bool {
        self.warmed
    }

    fn noise_factor(&mut self) -> f64 {
        let cv = self.profile.noise_cv;
        if cv == 0.0 {
            return 1.0;
        }
        // Log-normal with unit mean: exp(sigma*z - sigma^2/2).
        let sigma = (1.0 + cv * cv).ln().sqrt();
        let h = hash64(self.noise_seed, 0x6e6f69, self.calls);
        let z = gaussian_from(h);
        (sigma * z - sigma * sigma / 2.0).exp()
    }

    /// Timing for a batch of `n` texts: `c_ipc + n * c_enc / G`, optionally
    /// noise-scaled.
    pub fn timing(&mut self, n: u64) -> EncodeTiming {
        let factor = self.noise_factor();
        self.calls += 1;
        let charged = self.profile.cost.partition_time(n) * factor;
        EncodeTiming {
            charged,
            gpu_busy: charged * self.profile.gpu_fraction,
        }
    }

    /// Encode a whole SuperBatch in one call, returning one matrix per
    /// partition. Content seeds come from each partition's key so the same
    /// partition encodes to the same bytes regardless of how batches were
    /// composed.
    pub fn encode_batch(
        &mut self,
        batch: &SuperBatch,
        dense: bool,
    ) -> Result<(Vec<EmbeddingMatrix>, EncodeTiming)> {
        if batch.total == 0 {
            return Err(Error::EmptyBatch);
        }
        let timing = self.timing(batch.total);
        let mut per_partition = Vec::with_capacity(batch.entries.len());
        for entry in &batch.entries {
            per_partition.push(self.materialize_matrix(&entry.key, entry.payload.len(), dense));
        }
        Ok((per_partition, timing))
    }

    /// Rebuild the matrix for one partition without charging virtual time
    /// or consuming the noise stream. Serialization of metered runs and
    /// file writes after the fact use this; content is identical to what
    /// the timed call produced.
    pub fn encode_rows_untimed(
        &self,
        key: &PartitionKey,
        n: u64,
        dense: bool,
    ) -> Result<EmbeddingMatrix> {
        Ok(self.materialize_matrix(key, n, dense))
    }

    fn materialize_matrix(&self, key: &PartitionKey, n: u64, dense: bool) -> EmbeddingMatrix {
        let d = self.profile.dims;
        let store = if dense {
            let mut data = Vec::with_capacity((n * d as u64) as usize);
            for row in 0..n {
                fill_row(&mut data, key, row, d);
            }
            MatrixStore::Dense(Arc::new(data))
        } else {
            MatrixStore::Virtual
        };
        EmbeddingMatrix {
            rows: n,
            dims: d,
            key: key.clone(),
            store,
        }
    }
}

impl Encoder for VirtualEncoder {
    fn encode_rows(&mut self, key: &PartitionKey, n: u64, dense: bool) -> Result<EncodeOutcome> {
        if n == 0 {
            return Err(Error::EmptyBatch);
        }
        let timing = self.timing(n);
        let matrix = self.materialize_matrix(key, n, dense);
        Ok(EncodeOutcome { matrix, timing })
    }
}

// ---------------------------------------------------------------------------
// Deterministic row content
// ---------------------------------------------------------------------------

#[inline]
fn hash64(seed: u64, a: u64, b: u64) -> u64 {
    let mut x = seed ^ a.wrapping_mul(0x9E3779B97F4A7C15) ^ b.wrapping_mul(0xD6E8FEB86659FD93);
    x ^= x >> 30;
    x = x.wrapping_mul(0xBF58476D1CE4E5B9);
    x ^= x >> 27;
    x = x.wrapping_mul(0x94D049BB133111EB);
    x ^ (x >> 31)
}

#[inline]
fn gaussian_from(h: u64) -> f64 {
    // Box-Muller over two halves of the hash.
    let u1 = ((h >> 32) as f64 + 1.0) / (u32::MAX as f64 + 2.0);
    let u2 = ((h & 0xffff_ffff) as f64 + 1.0) / (u32::MAX as f64 + 2.0);
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

fn key_seed(key: &PartitionKey) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for &b in key.as_str().as_bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

/// Append one normalized row derived from `(key, row)` to `out`.
fn fill_row(out: &mut Vec<f32>, key: &PartitionKey, row: u64, dims: u32) {
    let ks = key_seed(key);
    let base = out.len();
    let mut norm2 = 0.0f64;
    for j in 0..dims as u64 {
        let h = hash64(ks, row, j);
        // Map to [-1, 1).
        let v = ((h >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0;
        norm2 += v * v;
        out.push(v as f32);
    }
    let inv = if norm2 > 0.0 {
        (1.0 / norm2.sqrt()) as f32
    } else {
        0.0
    };
    for v in &mut out[base..] {
        *v *= inv;
    }
    if inv == 0.0 {
        // Degenerate all-zero draw: fall back to a unit basis vector.
        out[base] = 1.0;
    }
}
