//! Synthetic partitioned workloads.
//!
//! Partition sizes are drawn from a log-normal distribution, optionally
//! rescaled so the total text count hits an exact target, and streamed in
//! partition-key order. In `Metered` mode no text bytes are ever allocated:
//! rows carry byte lengths only, which is what makes multi-million-text
//! simulation cheap. `Materialized` mode produces real (deterministic,
//! seeded) byte strings for serializer and end-to-end file tests.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Log-space parameters of a log-normal size distribution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogNormalParams {
    /// Mean of `ln(size)`.
    pub mu_log: f64,
    /// Standard deviation of `ln(size)`; must be positive.
    pub sigma_log: f64,
}

impl LogNormalParams {
    pub fn new(mu_log: f64, sigma_log: f64) -> Result<Self> {
        if sigma_log.is_nan() || sigma_log <= 0.0 || !sigma_log.is_finite() || !mu_log.is_finite() {
            return Err(Error::Config(format!(
                "log-normal params require finite mu and sigma > 0, got mu={mu_log}, sigma={sigma_log}"
            )));
        }
        Ok(Self { mu_log, sigma_log })
    }

    /// Log-normal parameters matching a target mean and standard deviation.
    pub fn from_moments(mean: f64, std: f64) -> Result<Self> {
        if mean.is_nan() || std.is_nan() || mean <= 0.0 || std <= 0.0 {
            return Err(Error::Config(format!(
                "moments must be positive, got mean={mean}, std={std}"
            )));
        }
        let cv2 = (std / mean).powi(2);
        let sigma2 = (1.0 + cv2).ln();
        Self::new(mean.ln() - sigma2 / 2.0, sigma2.sqrt())
    }

    /// Closed-form median `exp(mu_log)`.
    pub fn median(&self) -> f64 {
        self.mu_log.exp()
    }

    /// Closed-form coefficient of variation `sqrt(exp(sigma^2) - 1)`.
    pub fn cv(&self) -> f64 {
        ((self.sigma_log * self.sigma_log).exp() - 1.0).sqrt()
    }
}

/// Whether rows carry real bytes or byte lengths only.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TextMode {
    /// Rows are `(key, length)`; no text allocation anywhere.
    Metered,
    /// Rows are `(key, bytes)` from the seeded text generator.
    Materialized,
}

/// Configuration for [`generate_workload`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkloadConfig {
    /// Partition count P.
    pub partitions: usize,
    pub size_dist: LogNormalParams,
    /// Truncation floor applied to every drawn size.
    pub min_size: u64,
    /// Mean text length in bytes; per-text lengths are uniform in
    /// `[ceil(0.5*avg), floor(1.5*avg)]`, clamped to at least 1.
    pub avg_text_len: u32,
    pub seed: u64,
    pub text_mode: TextMode,
    /// When set, sizes are rescaled multiplicatively (rank order preserved)
    /// and rounded so the total is exactly this value.
    pub target_total: Option<u64>,
}

impl WorkloadConfig {
    /// The benchmark default: log-normal(9.03, 1.72), 47-byte texts,
    /// rescaled to an exact total.
    pub fn benchmark(partitions: usize, total: u64, sigma_log: f64, seed: u64) -> Self {
        WorkloadConfig {
            partitions,
            size_dist: LogNormalParams {
                mu_log: 9.03,
                sigma_log,
            },
            min_size: 1,
            avg_text_len: 47,
            seed,
            text_mode: if total >= 1_000_000 {
                TextMode::Metered
            } else {
                TextMode::Materialized
            },
            target_total: Some(total),
        }
    }

    fn validate(&self) -> Result<()> {
        if self.partitions == 0 {
            return Err(Error::Config("partition count must be >= 1".into()));
        }
        if self.min_size == 0 {
            return Err(Error::Config("min_size must be >= 1".into()));
        }
        if self.avg_text_len == 0 {
            return Err(Error::Config("avg_text_len must be >= 1".into()));
        }
        if let Some(t) = self.target_total {
            if t < self.partitions as u64 * self.min_size {
                return Err(Error::Config(format!(
                    "target_total {t} cannot satisfy {} partitions at min_size {}",
                    self.partitions, self.min_size
                )));
            }
        }
        LogNormalParams::new(self.size_dist.mu_log, self.size_dist.sigma_log)?;
        Ok(())
    }
}

/// An ordered, opaque partition identifier. Lexicographic order equals
/// generation (arrival) order.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PartitionKey(pub String);

impl std::fmt::Display for PartitionKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl PartitionKey {
    pub fn as_str(&self) -> &str {
        &self.0
    }
}

/// One logical partition: key, text count, and text-length statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionSpec {
    pub key: PartitionKey,
    /// Text count; always >= 1.
    pub n_k: u64,
    /// Mean text length of this partition in bytes.
    pub avg_text_len: f64,
    /// Exact total text bytes of this partition.
    pub total_text_bytes: u64,
}

/// Exact sample statistics over partition sizes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SizeStats {
    pub mean: f64,
    pub std: f64,
    /// `std / mean`.
    pub cv: f64,
    pub median: f64,
    pub min: u64,
    pub max: u64,
    pub total: u64,
}

/// A fully generated workload: ordered partition specs plus the config that
/// produced them.
#[derive(Debug, Clone)]
pub struct Workload {
    pub config: WorkloadConfig,
    pub partitions: Vec<PartitionSpec>,
    /// Stats of the raw draws, before target-total rescaling.
    pub raw_stats: SizeStats,
}

impl Workload {
    pub fn total_texts(&self) -> u64 {
        self.partitions.iter().map(|p| p.n_k).sum()
    }

    pub fn total_text_bytes(&self) -> u64 {
        self.partitions.iter().map(|p| p.total_text_bytes).sum()
    }

    /// Largest single-partition size.
    pub fn n_max(&self) -> u64 {
        self.partitions.iter().map(|p| p.n_k).max().unwrap_or(0)
    }

    pub fn stats(&self) -> Result<SizeStats> {
        size_stats(&self.partitions)
    }

    /// Deterministic per-text byte length for `(partition index, text index)`.
    pub fn text_len(&self, partition_idx: usize, text_idx: u64) -> u32 {
        text_len(
            self.config.seed,
            self.config.avg_text_len,
            partition_idx as u64,
            text_idx,
        )
    }

    /// Iterate rows of one partition in `Metered` terms (lengths only).
    pub fn partition_lens(&self, partition_idx: usize) -> impl Iterator<Item = u32> + '_ {
        let n = self.partitions[partition_idx].n_k;
        (0..n).map(move |i| self.text_len(partition_idx, i))
    }
}

/// Generate a workload. Deterministic for a given config.
pub fn generate_workload(config: &WorkloadConfig) -> Result<Workload> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let normal = Normal::new(config.size_dist.mu_log, config.size_dist.sigma_log)
        .map_err(|e| Error::Config(format!("size distribution: {e}")))?;

    let mut raw: Vec<u64> = Vec::with_capacity(config.partitions);
    for _ in 0..config.partitions {
        let draw = normal.sample(&mut rng).exp().round();
        let clamped = if draw.is_finite() && draw >= 1.0 {
            draw as u64
        } else {
            1
        };
        raw.push(clamped.max(config.min_size));
    }
    let raw_stats = stats_of(&raw);

    let sizes = match config.target_total {
        Some(target) => rescale_to_total(&raw, target, config.min_size),
        None => raw,
    };

    let key_width = (config.partitions as f64).log10().ceil().max(1.0) as usize + 1;
    let mut partitions = Vec::with_capacity(config.partitions);
    for (idx, &n_k) in sizes.iter().enumerate() {
        let total_text_bytes: u64 = (0..n_k)
            .map(|i| text_len(config.seed, config.avg_text_len, idx as u64, i) as u64)
            .sum();
        partitions.push(PartitionSpec {
            key: PartitionKey(format!("p{idx:0key_width$}")),
            n_k,
            avg_text_len: total_text_bytes as f64 / n_k as f64,
            total_text_bytes,
        });
    }

    Ok(Workload {
        config: config.clone(),
        partitions,
        raw_stats,
    })
}

/// Exact sample statistics over a set of partitions.
pub fn size_stats(partitions: &[PartitionSpec]) -> Result<SizeStats> {
    if partitions.is_empty() {
        return Err(Error::EmptyWorkload);
    }
    let sizes: Vec<u64> = partitions.iter().map(|p| p.n_k).collect();
    Ok(stats_of(&sizes))
}

fn stats_of(sizes: &[u64]) -> SizeStats {
    let n = sizes.len() as f64;
    let total: u64 = sizes.iter().sum();
    let mean = total as f64 / n;
    let var = sizes
        .iter()
        .map(|&s| (s as f64 - mean).powi(2))
        .sum::<f64>()
        / n;
    let std = var.sqrt();
    let mut sorted = sizes.to_vec();
    sorted.sort_unstable();
    let median = if sorted.len() % 2 == 1 {
        sorted[sorted.len() / 2] as f64
    } else {
        (sorted[sorted.len() / 2 - 1] + sorted[sorted.len() / 2]) as f64 / 2.0
    };
    SizeStats {
        mean,
        std,
        cv: if mean > 0.0 { std / mean } else { 0.0 },
        median,
        min: *sorted.first().unwrap(),
        max: *sorted.last().unwrap(),
        total,
    }
}

/// Scale sizes multiplicatively and round so they sum to exactly `target`,
/// preserving rank order and the `min_size` floor. Rounding residue is
/// settled by largest fractional remainder, then any floor-clamping deficit
/// is taken from the largest partitions.
fn rescale_to_total(raw: &[u64], target: u64, min_size: u64) -> Vec<u64> {
    let raw_total: u64 = raw.iter().sum();
    if raw_total == target {
        return raw.to_vec();
    }
    let scale = target as f64 / raw_total as f64;
    let mut sizes: Vec<u64> = Vec::with_capacity(raw.len());
    let mut remainders: Vec<(usize, f64)> = Vec::with_capacity(raw.len());
    for (i, &r) in raw.iter().enumerate() {
        let exact = r as f64 * scale;
        let floor = exact.floor();
        sizes.push(floor as u64);
        remainders.push((i, exact - floor));
    }
    let mut assigned: u64 = sizes.iter().sum();
    // Hand out the missing units to the largest remainders (ties by index).
    remainders.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    let mut cursor = 0;
    while assigned < target {
        let (idx, _) = remainders[cursor % remainders.len()];
        sizes[idx] += 1;
        assigned += 1;
        cursor += 1;
    }
    // Enforce the floor, stealing the excess from the largest partitions.
    let mut deficit: u64 = 0;
    for s in sizes.iter_mut() {
        if *s < min_size {
            deficit += min_size - *s;
            *s = min_size;
        }
    }
    if deficit > 0 {
        let mut order: Vec<usize> = (0..sizes.len()).collect();
        order.sort_by(|&a, &b| sizes[b].cmp(&sizes[a]).then(a.cmp(&b)));
        let mut i = 0;
        while deficit > 0 {
            let idx = order[i % order.len()];
            if sizes[idx] > min_size {
                sizes[idx] -= 1;
                deficit -= 1;
            }
            i += 1;
        }
    }
    debug_assert_eq!(sizes.iter().sum::<u64>(), target);
    sizes
}

// ---------------------------------------------------------------------------
// Deterministic per-text derivation
// ---------------------------------------------------------------------------

#[inline]
fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E3779B97F4A7C15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
    z ^ (z >> 31)
}

#[inline]
fn mix3(seed: u64, a: u64, b: u64) -> u64 {
    splitmix64(splitmix64(seed ^ a.wrapping_mul(0x9E3779B97F4A7C15)) ^ b)
}

/// Deterministic text length in `[ceil(0.5*avg), floor(1.5*avg)]`, >= 1.
#[inline]
pub fn text_len(seed: u64, avg: u32, partition_idx: u64, text_idx: u64) -> u32 {
    let lo = ((avg as f64 * 0.5).ceil() as u32).max(1);
    let hi = ((avg as f64 * 1.5).floor() as u32).max(lo);
    let span = (hi - lo + 1) as u64;
    let h = mix3(seed ^ 0x6c656e, partition_idx, text_idx);
    lo + (h % span) as u32
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

/// Deterministic synthetic text of exactly `len` bytes for `(key, index)`.
/// Same inputs always yield the same bytes; distinct inputs collide only
/// with negligible probability. Bytes are printable ASCII.
pub fn materialize_text(seed: u64, key: &PartitionKey, index: u64, len: u32) -> Result<Vec<u8>> {
    if len == 0 {
        return Err(Error::Config("text length must be >= 1".into()));
    }
    let mut state = mix3(seed ^ 0x74657874, fnv1a(key.as_str().as_bytes()), index);
    let mut out = Vec::with_capacity(len as usize);
    const ALPHABET: &[u8] = b"abcdefghijklmnopqrstuvwxyz ABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789-.";
    while out.len() < len as usize {
        state = splitmix64(state);
        let mut w = state;
        for _ in 0..8 {
            if out.len() == len as usize {
                break;
            }
            out.push(ALPHABET[(w & 0x3f) as usize % ALPHABET.len()]);
            w >>= 8;
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Manifest
// ---------------------------------------------------------------------------

/// Diffable JSON manifest: config plus per-partition `(key, n_k, avg_len)`,
/// in canonical field order.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WorkloadManifest {
    pub config: WorkloadConfig,
    pub partitions: Vec<ManifestEntry>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub key: PartitionKey,
    pub n_k: u64,
    pub avg_len: f64,
}

impl WorkloadManifest {
    pub fn from_workload(w: &Workload) -> Self {
        WorkloadManifest {
            config: w.config.clone(),
            partitions: w
                .partitions
                .iter()
                .map(|p| ManifestEntry {
                    key: p.key.clone(),
                    n_k: p.n_k,
                    avg_len: p.avg_text_len,
                })
                .collect(),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}
