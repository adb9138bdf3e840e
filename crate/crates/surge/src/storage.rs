//! Latency-profiled storage, the asynchronous upload pool, fault injection,
//! and resume scanning.
//!
//! Upload timing follows a simple duration law: `base_latency +
//! bytes / throughput` per write attempt. Transient faults consume the full
//! attempt duration, then back off `2^attempt` seconds before retrying, up
//! to `max_attempts` tries. In simulation the pool is a set of virtual-time
//! worker lanes; a filesystem-backed [`Backend`] provides real files for
//! integration and resume tests with the same commit-on-complete visibility
//! contract.

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::workload::PartitionKey;

/// Latency/throughput/fault model of one storage target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StorageProfile {
    pub name: String,
    /// Fixed seconds per write attempt.
    pub base_latency: f64,
    /// Bytes per second per write; `None` models an infinitely fast sink.
    pub throughput: Option<f64>,
    /// Probability that any single attempt fails transiently.
    pub fault_rate: f64,
}

impl StorageProfile {
    pub fn new(
        name: &str,
        base_latency: f64,
        throughput: Option<f64>,
        fault_rate: f64,
    ) -> Result<Self> {
        if base_latency < 0.0 {
            return Err(Error::Config("base_latency must be >= 0".into()));
        }
        if let Some(t) = throughput {
            if t.is_nan() || t <= 0.0 {
                return Err(Error::Config("throughput must be positive or unset".into()));
            }
        }
        if !(0.0..1.0).contains(&fault_rate) {
            return Err(Error::Config("fault_rate must be in [0,1)".into()));
        }
        Ok(StorageProfile {
            name: name.into(),
            base_latency,
            throughput,
            fault_rate,
        })
    }

    /// No-op sink: zero latency, infinite bandwidth.
    pub fn null() -> Self {
        Self::new("null", 0.0, None, 0.0).unwrap()
    }

    /// Local HDFS-style target: 2 ms, 1 GB/s.
    pub fn hdfs() -> Self {
        Self::new("hdfs", 0.002, Some(1e9), 0.0).unwrap()
    }

    /// Regional object store: 10 ms, 200 MB/s.
    pub fn gcs() -> Self {
        Self::new("gcs", 0.010, Some(200e6), 0.0).unwrap()
    }

    /// Same-region S3-style target: 25 ms, 200 MB/s. The latency figure is
    /// interpolated between the regional and cross-region profiles, not
    /// vendor-published.
    pub fn s3() -> Self {
        Self::new("s3", 0.025, Some(200e6), 0.0).unwrap()
    }

    /// Cross-region object store: 50 ms, 40 MB/s. Calibrated so the sync
    /// degradation ordering and overlap-ratio regime of the slowest tier
    /// reproduce; only the latency comes from the reference deployment.
    pub fn cross_region() -> Self {
        Self::new("cross_region", 0.050, Some(40e6), 0.0).unwrap()
    }

    pub fn builtin(name: &str) -> Result<Self> {
        match name {
            "null" => Ok(Self::null()),
            "hdfs" => Ok(Self::hdfs()),
            "gcs" => Ok(Self::gcs()),
            "s3" => Ok(Self::s3()),
            "cross_region" | "cross-region" => Ok(Self::cross_region()),
            other => Err(Error::Config(format!(
                "unknown storage profile {other:?} (expected null, hdfs, gcs, s3, cross_region)"
            ))),
        }
    }

    pub const BUILTIN_NAMES: [&'static str; 5] = ["null", "hdfs", "gcs", "s3", "cross_region"];

    pub fn with_fault_rate(mut self, fault_rate: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&fault_rate) {
            return Err(Error::Config("fault_rate must be in [0,1)".into()));
        }
        self.fault_rate = fault_rate;
        Ok(self)
    }

    /// Duration of one successful write attempt.
    pub fn write_duration(&self, bytes: u64) -> f64 {
        self.base_latency + self.throughput.map_or(0.0, |t| bytes as f64 / t)
    }
}

/// Worker count and retry policy of the upload pool.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UploadPoolConfig {
    pub workers: usize,
    pub max_attempts: u32,
    /// Backoff after attempt `a` is `backoff_base * 2^a` seconds.
    pub backoff_base: f64,
}

impl UploadPoolConfig {
    pub const DEFAULT: UploadPoolConfig = UploadPoolConfig {
        workers: 32,
        max_attempts: 3,
        backoff_base: 1.0,
    };

    pub fn new(workers: usize, max_attempts: u32, backoff_base: f64) -> Result<Self> {
        if workers == 0 || max_attempts == 0 {
            return Err(Error::Config(
                "workers and max_attempts must be >= 1".into(),
            ));
        }
        if backoff_base < 0.0 {
            return Err(Error::Config("backoff_base must be >= 0".into()));
        }
        Ok(UploadPoolConfig {
            workers,
            max_attempts,
            backoff_base,
        })
    }
}

impl Default for UploadPoolConfig {
    fn default() -> Self {
        Self::DEFAULT
    }
}

#[inline]
fn hash01(seed: u64, path: &str, attempt: u32) -> f64 {
    let mut h: u64 = seed ^ 0x9E3779B97F4A7C15;
    for &b in path.as_bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h ^= attempt as u64;
    h ^= h >> 30;
    h = h.wrapping_mul(0xBF58476D1CE4E5B9);
    h ^= h >> 27;
    h = h.wrapping_mul(0x94D049BB133111EB);
    h ^= h >> 31;
    (h >> 11) as f64 / (1u64 << 53) as f64
}

/// The simulated outcome of writing one object, retries included.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AttemptPlan {
    pub attempts: u32,
    /// Total seconds spent in attempts plus backoff sleeps.
    pub busy: f64,
    pub ok: bool,
}

/// Walk the retry ladder for one path deterministically.
pub fn plan_attempts(
    profile: &StorageProfile,
    cfg: &UploadPoolConfig,
    fault_seed: u64,
    path: &str,
    bytes: u64,
) -> AttemptPlan {
    let per_attempt = profile.write_duration(bytes);
    let mut busy = 0.0;
    for a in 0..cfg.max_attempts {
        busy += per_attempt;
        let faulted = hash01(fault_seed, path, a) < profile.fault_rate;
        if !faulted {
            return AttemptPlan {
                attempts: a + 1,
                busy,
                ok: true,
            };
        }
        if a + 1 < cfg.max_attempts {
            busy += cfg.backoff_base * (1u64 << a) as f64;
        }
    }
    AttemptPlan {
        attempts: cfg.max_attempts,
        busy,
        ok: false,
    }
}

/// One completed (or failed) upload as scheduled on the virtual pool.
#[derive(Debug, Clone, PartialEq)]
pub struct UploadTicket {
    pub path: String,
    /// When the job was handed to the pool (caller's clock).
    pub submitted: f64,
    /// When a worker started it.
    pub started: f64,
    /// When serialization on the worker finished and the write began.
    pub write_started: f64,
    /// When the final attempt completed.
    pub completed: f64,
    /// Seconds of serialize work performed on the worker.
    pub t_ser: f64,
    /// Seconds of upload work performed, retries and backoffs included.
    pub t_upl: f64,
    pub attempts: u32,
    pub ok: bool,
}

/// Virtual-time upload pool: `workers` lanes consuming jobs in submission
/// order. Submitting never advances the caller's clock; at most `workers`
/// uploads overlap at any instant.
#[derive(Debug)]
pub struct UploadPool {
    profile: StorageProfile,
    cfg: UploadPoolConfig,
    fault_seed: u64,
    free_at: Vec<f64>,
    failures: Vec<String>,
}

impl UploadPool {
    pub fn new(profile: StorageProfile, cfg: UploadPoolConfig, fault_seed: u64) -> Self {
        let free_at = vec![0.0; cfg.workers];
        UploadPool {
            profile,
            cfg,
            fault_seed,
            free_at,
            failures: Vec::new(),
        }
    }

    pub fn profile(&self) -> &StorageProfile {
        &self.profile
    }

    /// Schedule serialize + upload of one object. Returns immediately with
    /// the full virtual-time ticket.
    pub fn submit(
        &mut self,
        ready: f64,
        serialize_secs: f64,
        bytes: u64,
        path: &str,
    ) -> UploadTicket {
        // Earliest-free worker, ties to the lowest index.
        let mut w = 0;
        for i in 1..self.free_at.len() {
            if self.free_at[i] < self.free_at[w] {
                w = i;
            }
        }
        let started = self.free_at[w].max(ready);
        let write_started = started + serialize_secs;
        let plan = plan_attempts(&self.profile, &self.cfg, self.fault_seed, path, bytes);
        let completed = write_started + plan.busy;
        self.free_at[w] = completed;
        if !plan.ok {
            self.failures.push(path.to_string());
        }
        UploadTicket {
            path: path.to_string(),
            submitted: ready,
            started,
            write_started,
            completed,
            t_ser: serialize_secs,
            t_upl: plan.busy,
            attempts: plan.attempts,
            ok: plan.ok,
        }
    }

    /// Virtual time at which every submitted job has completed. Surfaces
    /// the first exhausted-retries failure, if any.
    pub fn drain(&self) -> Result<f64> {
        if let Some(path) = self.failures.first() {
            return Err(Error::UploadFailed {
                path: path.clone(),
                attempts: self.cfg.max_attempts,
            });
        }
        Ok(self.free_at.iter().copied().fold(0.0, f64::max))
    }

    pub fn failures(&self) -> &[String] {
        &self.failures
    }
}

/// Canonical object path for one partition of one run.
pub fn partition_path(prefix: &str, run_id: &str, key: &PartitionKey) -> String {
    format!("{prefix}/{run_id}/{key}.srgb")
}

/// Write/exists/list surface shared by the simulated and real backends.
/// Writes are atomic: a path is visible only once fully written.
pub trait Backend {
    fn write(&mut self, path: &str, bytes: &[u8]) -> Result<()>;
    fn exists(&self, path: &str) -> bool;
    fn list(&self, prefix: &str) -> Result<Vec<String>>;
}

/// Filesystem-backed store used by integration and resume tests. Atomicity
/// comes from write-to-temp + rename.
#[derive(Debug)]
pub struct FsBackend {
    root: PathBuf,
    overwrites: u64,
}

impl FsBackend {
    pub fn new(root: impl AsRef<Path>) -> Result<Self> {
        std::fs::create_dir_all(root.as_ref())?;
        Ok(FsBackend {
            root: root.as_ref().to_path_buf(),
            overwrites: 0,
        })
    }

    fn full(&self, path: &str) -> PathBuf {
        self.root.join(path)
    }

    pub fn read(&self, path: &str) -> Result<Vec<u8>> {
        Ok(std::fs::read(self.full(path))?)
    }

    /// Duplicate-path writes are idempotent but flagged here.
    pub fn overwrites(&self) -> u64 {
        self.overwrites
    }
}

impl Backend for FsBackend {
    fn write(&mut self, path: &str, bytes: &[u8]) -> Result<()> {
        let full = self.full(path);
        if full.exists() {
            self.overwrites += 1;
        }
        if let Some(parent) = full.parent() {
            std::fs::create_dir_all(parent)?;
        }
        let tmp = full.with_extension("tmp");
        std::fs::write(&tmp, bytes)?;
        std::fs::rename(&tmp, &full)?;
        Ok(())
    }

    fn exists(&self, path: &str) -> bool {
        self.full(path).is_file()
    }

    fn list(&self, prefix: &str) -> Result<Vec<String>> {
        let dir = self.full(prefix);
        let mut out = Vec::new();
        if !dir.exists() {
            return Ok(out);
        }
        let mut stack = vec![dir];
        while let Some(d) = stack.pop() {
            for entry in std::fs::read_dir(&d)? {
                let entry = entry?;
                let p = entry.path();
                if p.is_dir() {
                    stack.push(p);
                } else if p.extension().is_some_and(|e| e == "srgb") {
                    let rel = p.strip_prefix(&self.root).unwrap();
                    out.push(rel.to_string_lossy().replace('\\', "/"));
                }
            }
        }
        out.sort();
        Ok(out)
    }
}

/// In-memory backend for pure-simulation runs that still want a visible
/// output set.
#[derive(Debug, Default)]
pub struct MemBackend {
    objects: std::collections::BTreeMap<String, Vec<u8>>,
    overwrites: u64,
}

impl MemBackend {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, path: &str) -> Option<&[u8]> {
        self.objects.get(path).map(|v| v.as_slice())
    }

    pub fn len(&self) -> usize {
        self.objects.len()
    }

    pub fn is_empty(&self) -> bool {
        self.objects.is_empty()
    }

    pub fn overwrites(&self) -> u64 {
        self.overwrites
    }
}

impl Backend for MemBackend {
    fn write(&mut self, path: &str, bytes: &[u8]) -> Result<()> {
        if self
            .objects
            .insert(path.to_string(), bytes.to_vec())
            .is_some()
        {
            self.overwrites += 1;
        }
        Ok(())
    }

    fn exists(&self, path: &str) -> bool {
        self.objects.contains_key(path)
    }

    fn list(&self, prefix: &str) -> Result<Vec<String>> {
        Ok(self
            .objects
            .keys()
            .filter(|k| k.starts_with(prefix))
            .cloned()
            .collect())
    }
}

/// Partition keys with fully written files under `prefix/run_id/`. The
/// O(P) startup existence check behind idempotent resume.
pub fn scan_existing(
    backend: &dyn Backend,
    prefix: &str,
    run_id: &str,
) -> Result<HashSet<PartitionKey>> {
    let dir = format!("{prefix}/{run_id}");
    let mut keys = HashSet::new();
    for path in backend.list(&dir)? {
        if let Some(name) = path.rsplit('/').next() {
            if let Some(stem) = name.strip_suffix(".srgb") {
                keys.insert(PartitionKey(stem.to_string()));
            }
        }
    }
    Ok(keys)
}
