//! Closed-form cost model.
//!
//! Everything here is a pure function of its inputs: per-call encode time,
//! the IPC-dominated threshold, the amortization speedup, the I/O overlap
//! ratio, the data-resident memory bound, the expected SuperBatch fill
//! ratio, and the phi/CV applicability verdict. The simulator in
//! [`crate::runner`] is validated against these forms, and they are equally
//! usable standalone for capacity planning.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::workload::{SizeStats, Workload};

/// Per-call and per-text encode costs on a `gpus`-wide worker pool.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostParams {
    /// Fixed dispatch/serialize/gather overhead per encode call, seconds.
    pub c_ipc: f64,
    /// Per-text encode cost, seconds. Divided across `gpus`.
    pub c_enc: f64,
    /// GPU count, >= 1.
    pub gpus: u32,
}

impl CostParams {
    pub fn new(c_ipc: f64, c_enc: f64, gpus: u32) -> Result<Self> {
        if c_ipc < 0.0 || c_enc.is_nan() || c_enc <= 0.0 || gpus == 0 {
            return Err(Error::Config(format!(
                "cost params require c_ipc >= 0, c_enc > 0, gpus >= 1; got ({c_ipc}, {c_enc}, {gpus})"
            )));
        }
        Ok(Self { c_ipc, c_enc, gpus })
    }

    /// Wall-clock seconds for one encode call over `n` texts:
    /// `c_ipc + n * c_enc / G`.
    pub fn partition_time(&self, n: u64) -> f64 {
        self.c_ipc + n as f64 * self.c_enc / self.gpus as f64
    }

    /// Per-partition throughput `n / partition_time(n)` in texts/s.
    pub fn partition_throughput(&self, n: u64) -> f64 {
        if n == 0 {
            return 0.0;
        }
        n as f64 / self.partition_time(n)
    }

    /// The IPC-dominated threshold `n* = c_ipc * G / c_enc`: partitions
    /// below it spend more time on dispatch than on encoding.
    pub fn ipc_threshold(&self) -> f64 {
        self.c_ipc * self.gpus as f64 / self.c_enc
    }
}

/// Named parameter presets for the benchmark hardware/model pairs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    /// 4x L4, MiniLM-class encoder (22M params, d=384).
    L4x4Minilm,
    /// 2x L4, MiniLM-class encoder.
    L4x2Minilm,
    /// 2x L4, bge-base-class encoder (109M params, d=768).
    L4x2Bge,
}

impl Preset {
    pub const ALL: [Preset; 3] = [Preset::L4x4Minilm, Preset::L4x2Minilm, Preset::L4x2Bge];

    pub fn cost(&self) -> CostParams {
        match self {
            Preset::L4x4Minilm => CostParams {
                c_ipc: 0.087,
                c_enc: 1.49e-4,
                gpus: 4,
            },
            Preset::L4x2Minilm => CostParams {
                c_ipc: 0.067,
                c_enc: 1.10e-4,
                gpus: 2,
            },
            Preset::L4x2Bge => CostParams {
                c_ipc: 0.081,
                c_enc: 2.15e-4,
                gpus: 2,
            },
        }
    }

    /// Embedding dimension of the preset's model.
    pub fn dims(&self) -> u32 {
        match self {
            Preset::L4x4Minilm | Preset::L4x2Minilm => 384,
            Preset::L4x2Bge => 768,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Preset::L4x4Minilm => "L4x4-minilm",
            Preset::L4x2Minilm => "L4x2-minilm",
            Preset::L4x2Bge => "L4x2-bge",
        }
    }

    pub fn parse(s: &str) -> Result<Preset> {
        match s {
            "L4x4-minilm" => Ok(Preset::L4x4Minilm),
            "L4x2-minilm" => Ok(Preset::L4x2Minilm),
            "L4x2-bge" => Ok(Preset::L4x2Bge),
            other => Err(Error::Config(format!(
                "unknown preset {other:?} (expected L4x4-minilm, L4x2-minilm, L4x2-bge)"
            ))),
        }
    }
}

impl std::fmt::Display for Preset {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Output of [`predict_speedup`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    /// IPC-to-compute ratio `alpha = P*c_ipc / (N*c_enc/G)`.
    pub alpha: f64,
    /// Flush count used for the prediction.
    pub flushes: u64,
    /// `(1 + alpha) / (1 + alpha * F / P)`.
    pub speedup: f64,
    /// Partition-by-partition wall time, seconds.
    pub t_pbp: f64,
    /// Batched wall time at `F` flushes, seconds.
    pub t_batched: f64,
}

/// Amortization speedup of batching `N` texts over `P` partitions into `F`
/// encode calls, relative to one call per partition.
pub fn predict_speedup(n: u64, p: u64, flushes: u64, params: &CostParams) -> Result<Prediction> {
    if n == 0 {
        return Err(Error::Config("prediction requires N >= 1".into()));
    }
    if p == 0 || flushes == 0 {
        return Err(Error::Config(
            "prediction requires P >= 1 and F >= 1".into(),
        ));
    }
    if flushes > p {
        return Err(Error::Config(format!(
            "F ({flushes}) must be <= P ({p}); batching more calls than partitions is counterproductive"
        )));
    }
    let compute = n as f64 * params.c_enc / params.gpus as f64;
    let alpha = p as f64 * params.c_ipc / compute;
    let t_pbp = compute * (1.0 + alpha);
    let t_batched = compute * (1.0 + alpha * flushes as f64 / p as f64);
    Ok(Prediction {
        alpha,
        flushes,
        speedup: t_pbp / t_batched,
        t_pbp,
        t_batched,
    })
}

/// The flush count used in predictions: `ceil(N / B_min)`. Actual runs can
/// flush fewer times because of overshoot.
pub fn predicted_flushes(n: u64, b_min: u64) -> u64 {
    n.div_ceil(b_min)
}

/// Fraction of partitions smaller than the IPC-dominated threshold.
pub fn ipc_fraction(workload: &Workload, params: &CostParams) -> Result<f64> {
    if workload.partitions.is_empty() {
        return Err(Error::EmptyWorkload);
    }
    let n_star = params.ipc_threshold();
    let below = workload
        .partitions
        .iter()
        .filter(|p| (p.n_k as f64) < n_star)
        .count();
    Ok(below as f64 / workload.partitions.len() as f64)
}

/// I/O overlap ratio: the fraction of `t_ser + t_upl` that fits under
/// `t_enc`. Defined as 1 when there is no I/O to overlap.
pub fn overlap_ratio(t_enc: f64, t_ser: f64, t_upl: f64) -> f64 {
    let io = t_ser + t_upl;
    if io <= 0.0 {
        return 1.0;
    }
    1.0 - (io - t_enc).max(0.0) / io
}

/// Data-resident bytes of a buffer holding `s` texts of average length
/// `text_len` with `dims`-wide float32 embeddings: `s*L + s*d*4`.
pub fn memory_bound(s: u64, text_len: f64, dims: u32) -> f64 {
    s as f64 * text_len + s as f64 * dims as f64 * 4.0
}

/// First-order expected fill ratio of a SuperBatch relative to `B_min`:
/// `1 + sigma^2 / (2 * mu * B_min)`. The dropped correction is `O(1/B_min)`
/// (it includes a `mu/(2*B_min)` term), so this undershoots the true renewal
/// overshoot slightly; see the fill-ratio oracle in the acceptance suite.
pub fn expected_fill_ratio(stats: &SizeStats, b_min: u64) -> Result<f64> {
    if b_min == 0 {
        return Err(Error::Config("B_min must be >= 1".into()));
    }
    if stats.mean.is_nan() || stats.mean <= 0.0 {
        return Err(Error::Config("stats.mean must be positive".into()));
    }
    Ok(1.0 + stats.std * stats.std / (2.0 * stats.mean * b_min as f64))
}

/// Upper bound on externally observed GPU utilization: duty cycle times
/// compute intensity.
pub fn gpu_util_bound(delta: f64, intensity: f64) -> f64 {
    delta * intensity
}

/// Applicability verdict from the phi/CV decision table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    /// phi >= 0.5 and CV >= 1.0: 1.5-2x throughput gain plus memory/TTFO benefits.
    StronglyRecommended,
    /// phi >= 0.5 and CV < 1.0: uniformly small partitions.
    Beneficial,
    /// phi < 0.5 and CV >= 1.0.
    ModeratelyBeneficial,
    /// phi < 0.5 and CV < 1.0: partition-by-partition may suffice.
    Optional,
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Verdict::StronglyRecommended => "strongly recommended",
            Verdict::Beneficial => "beneficial",
            Verdict::ModeratelyBeneficial => "moderately beneficial",
            Verdict::Optional => "optional",
        };
        f.write_str(s)
    }
}

/// A decision-table row: inputs plus verdict.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Recommendation {
    pub phi: f64,
    pub cv: f64,
    pub verdict: Verdict,
}

/// Decision table over the IPC-dominated fraction and the partition-size
/// coefficient of variation. Exact boundary values (phi = 0.5, cv = 1.0)
/// map to the "greater" rows so the function is total and deterministic.
pub fn recommend(phi: f64, cv: f64) -> Result<Recommendation> {
    if !(0.0..=1.0).contains(&phi) {
        return Err(Error::Config(format!("phi must be in [0,1], got {phi}")));
    }
    if cv < 0.0 {
        return Err(Error::Config(format!("cv must be >= 0, got {cv}")));
    }
    let verdict = match (phi >= 0.5, cv >= 1.0) {
        (true, true) => Verdict::StronglyRecommended,
        (true, false) => Verdict::Beneficial,
        (false, true) => Verdict::ModeratelyBeneficial,
        (false, false) => Verdict::Optional,
    };
    Ok(Recommendation { phi, cv, verdict })
}
