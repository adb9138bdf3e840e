//! The virtual-clock pipeline engine.
//!
//! One run = one workload, one batching strategy, one encoder profile, one
//! storage profile. The engine is single-threaded over a virtual clock;
//! concurrency is *modeled*, not executed: the encoder is an exclusive
//! resource that blocks the main timeline, and uploads occupy `W` virtual
//! worker lanes inside [`UploadPool`]. Deterministic inputs produce
//! identical event orderings and metrics, which is what makes the desk-scale
//! reproductions and the crash/resume tests exact.
//!
//! Strategies:
//!
//! - `Pbp`: one encode call per partition, I/O handed to the pool.
//! - `Fsb{batch}`: concatenate everything, encode fixed-size chunks, then
//!   regroup and emit all partition files at the end. Chunk dispatch
//!   pipelines: the pre-concatenated stream keeps the worker pool fed, so
//!   only the first call's dispatch overhead lands on the critical path
//!   (per-call accounting still charges every call).
//! - `SurgeSync`: SuperBatch aggregation, serialize + upload charged to the
//!   main timeline after each flush.
//! - `SurgeAsync`: SuperBatch aggregation, serialize + upload submitted to
//!   the worker pool at encode completion.
//! - `PbPbpLb{batch}`: offline First-Fit-Decreasing packing of whole
//!   partitions into capacity-`batch` bins, one encode call per bin,
//!   pool-managed I/O.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::aggregator::{
    FlushReason, FlushRequest, PartitionPayload, Row, SuperBatch, SurgeAggregator, Thresholds,
};
use crate::columnar::{encoded_len, serialize_zero_copy, TextsRef, DEFAULT_C_SER};
use crate::costmodel::Preset;
use crate::encoder::{EncoderProfile, VirtualEncoder};
use crate::error::{Error, Result};
use crate::storage::{
    partition_path, scan_existing, Backend, StorageProfile, UploadPool, UploadPoolConfig,
};
use crate::telemetry::{
    cost_per_million, rho_achieved, rho_capacity, track_peak_memory, FlushRecord, MemEvent,
    RunMetrics,
};
use crate::workload::{
    generate_workload, materialize_text, PartitionKey, TextMode, Workload, WorkloadConfig,
};

/// Batching strategy under test.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Strategy {
    Pbp,
    Fsb { batch: u64 },
    SurgeSync { thresholds: Thresholds },
    SurgeAsync { thresholds: Thresholds },
    PbPbpLb { batch: u64 },
}

impl Strategy {
    pub fn name(&self) -> &'static str {
        match self {
            Strategy::Pbp => "pbp",
            Strategy::Fsb { .. } => "fsb",
            Strategy::SurgeSync { .. } => "surge-sync",
            Strategy::SurgeAsync { .. } => "surge-async",
            Strategy::PbPbpLb { .. } => "pb-pbp-lb",
        }
    }

    pub fn parse(s: &str, batch: u64, thresholds: Thresholds) -> Result<Strategy> {
        match s {
            "pbp" => Ok(Strategy::Pbp),
            "fsb" => Ok(Strategy::Fsb { batch }),
            "surge-sync" => Ok(Strategy::SurgeSync { thresholds }),
            "surge-async" => Ok(Strategy::SurgeAsync { thresholds }),
            "pb-pbp-lb" => Ok(Strategy::PbPbpLb { batch }),
            other => Err(Error::Config(format!(
                "unknown strategy {other:?} (expected pbp, fsb, surge-sync, surge-async, pb-pbp-lb)"
            ))),
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            Strategy::Fsb { batch } | Strategy::PbPbpLb { batch } if *batch == 0 => {
                Err(Error::Config("batch size must be >= 1".into()))
            }
            _ => Ok(()),
        }
    }
}

/// Monotone virtual clock for the main (CPU/GPU-serializing) timeline. The
/// I/O worker lanes keep their own non-decreasing timestamps inside
/// [`UploadPool`].
#[derive(Debug, Clone, Copy, Default)]
pub struct EventClock {
    now: f64,
}

impl EventClock {
    pub fn now(&self) -> f64 {
        self.now
    }

    pub fn advance(&mut self, dt: f64) {
        debug_assert!(dt >= 0.0, "clock must not run backwards (dt = {dt})");
        self.now += dt;
    }
}

/// Full configuration of one run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunConfig {
    pub run_id: String,
    pub workload: WorkloadConfig,
    pub strategy: Strategy,
    pub profile: EncoderProfile,
    pub preset: Option<Preset>,
    pub storage: StorageProfile,
    pub pool: UploadPoolConfig,
    /// Serialize cost, seconds per text.
    pub c_ser: f64,
    /// Per-text cost of the FSB regroup pass, seconds. Default 0: the pass
    /// is memory-bound, not time-itemized.
    pub regroup_cost_per_text: f64,
    /// Constant added to reported peak memory for RSS-style comparisons.
    /// Default 0; acceptance checks never use it.
    pub runtime_overhead_bytes: u64,
    /// Node price for the cost metric, dollars per hour.
    pub hourly_rate: f64,
    /// Seed for noise and fault derivations (workload has its own seed).
    pub seed: u64,
    /// Object-path prefix for outputs.
    pub output_prefix: String,
}

impl RunConfig {
    pub fn new(
        workload: WorkloadConfig,
        strategy: Strategy,
        preset: Preset,
        storage: StorageProfile,
    ) -> Self {
        RunConfig {
            run_id: "run0".into(),
            workload,
            strategy,
            profile: EncoderProfile::from_preset(preset),
            preset: Some(preset),
            storage,
            pool: UploadPoolConfig::DEFAULT,
            c_ser: DEFAULT_C_SER,
            regroup_cost_per_text: 0.0,
            runtime_overhead_bytes: 0,
            hourly_rate: 7.30,
            seed: 5,
            output_prefix: "runs".into(),
        }
    }

    fn validate(&self) -> Result<()> {
        self.strategy.validate()?;
        self.profile.validate()?;
        if self.c_ser < 0.0 || self.regroup_cost_per_text < 0.0 {
            return Err(Error::Config("per-text costs must be >= 0".into()));
        }
        if self.hourly_rate.is_nan() || self.hourly_rate <= 0.0 {
            return Err(Error::Config("hourly_rate must be positive".into()));
        }
        Ok(())
    }
}

/// Run manifest: everything needed to reproduce a run, in a stable schema.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub config: RunConfig,
    pub total_texts: u64,
    pub partitions: usize,
}

impl RunManifest {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Stable FNV-1a hash of the canonical JSON, for sweep provenance.
    pub fn hash(&self) -> Result<String> {
        let json = serde_json::to_string(self)?;
        let mut h: u64 = 0xcbf29ce484222325;
        for &b in json.as_bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(0x100000001b3);
        }
        Ok(format!("{h:016x}"))
    }
}

/// Everything a run produces.
#[derive(Debug)]
pub struct RunOutput {
    pub manifest: RunManifest,
    pub metrics: RunMetrics,
    pub flushes: Vec<FlushRecord>,
    /// Keys whose encode call completed within the run.
    pub encoded: HashSet<PartitionKey>,
    /// Keys whose upload completed (and file landed, when a backend is attached).
    pub uploaded: HashSet<PartitionKey>,
    /// True when the run was truncated by an injected crash.
    pub crashed: bool,
    /// Largest single batch (text + embedding bytes) held in flight.
    pub max_batch_bytes: u64,
}

/// Side-effect and fault-injection options for [`run_with`].
#[derive(Default)]
pub struct RunEnv<'a> {
    /// When present, completed uploads write real objects here.
    pub backend: Option<&'a mut dyn Backend>,
    /// Truncate the run at this virtual time: uploads completing later never
    /// land, and the main loop halts at the next event boundary.
    pub crash_at: Option<f64>,
    /// Scan the backend for already-completed partitions and skip them.
    pub resume: bool,
}

/// Run a strategy over a freshly generated workload with no side effects.
pub fn run(cfg: &RunConfig) -> Result<RunOutput> {
    run_with(cfg, RunEnv::default())
}

/// Run with an attached backend, crash injection, or resume scanning.
pub fn run_with(cfg: &RunConfig, env: RunEnv<'_>) -> Result<RunOutput> {
    cfg.validate()?;
    let workload = generate_workload(&cfg.workload)?;
    run_workload(cfg, &workload, env)
}

/// Run over a pre-generated workload (sweeps reuse one workload across
/// strategies).
pub fn run_workload(cfg: &RunConfig, workload: &Workload, env: RunEnv<'_>) -> Result<RunOutput> {
    cfg.validate()?;
    let mut engine = Engine::new(cfg, workload, env)?;
    match cfg.strategy {
        Strategy::Pbp => engine.run_pbp()?,
        Strategy::Fsb { batch } => engine.run_fsb(batch)?,
        Strategy::SurgeSync { thresholds } => engine.run_surge(thresholds, false)?,
        Strategy::SurgeAsync { thresholds } => engine.run_surge(thresholds, true)?,
        Strategy::PbPbpLb { batch } => engine.run_pb_pbp_lb(batch)?,
    }
    engine.finish()
}

/// First-Fit-Decreasing packing of whole partitions into capacity-`b` bins.
/// Items are sorted by size descending (ties by key ascending), then each is
/// placed into the first bin with room. A partition larger than `b` opens
/// its own bin, which then exceeds capacity: partitions are never split.
pub fn ffd_pack(sizes: &[(PartitionKey, u64)], b: u64) -> Vec<FfdBin> {
    let mut order: Vec<usize> = (0..sizes.len()).collect();
    order.sort_by(|&x, &y| {
        sizes[y]
            .1
            .cmp(&sizes[x].1)
            .then(sizes[x].0.cmp(&sizes[y].0))
    });
    let mut bins: Vec<FfdBin> = Vec::new();
    for idx in order {
        let (ref key, n) = sizes[idx];
        let slot = bins.iter_mut().find(|bin| bin.total + n <= b);
        match slot {
            Some(bin) => {
                bin.total += n;
                bin.partitions.push((key.clone(), idx, n));
            }
            None => bins.push(FfdBin {
                total: n,
                partitions: vec![(key.clone(), idx, n)],
            }),
        }
    }
    bins
}

/// One FFD bin: whole partitions, `(key, workload index, size)`.
#[derive(Debug, Clone, PartialEq)]
pub struct FfdBin {
    pub total: u64,
    pub partitions: Vec<(PartitionKey, usize, u64)>,
}

// ---------------------------------------------------------------------------
// Engine
// ---------------------------------------------------------------------------

struct PartitionJob {
    key: PartitionKey,
    widx: usize,
    n: u64,
    text_bytes: u64,
    /// Buffered texts from the aggregator path, when materialized.
    texts: Option<Vec<Vec<u8>>>,
}

struct Engine<'a, 'b> {
    cfg: &'a RunConfig,
    workload: &'a Workload,
    clock: EventClock,
    encoder: VirtualEncoder,
    pool: UploadPool,
    records: Vec<FlushRecord>,
    mem: Vec<MemEvent>,
    ttfo: Option<f64>,
    encoded: HashSet<PartitionKey>,
    uploaded: HashSet<PartitionKey>,
    skip: HashSet<PartitionKey>,
    env_backend: Option<&'b mut dyn Backend>,
    crash_at: Option<f64>,
    crashed: bool,
    processed_texts: u64,
    /// Largest (text+embedding) bytes of any single flushed batch.
    max_batch_bytes: u64,
    key_index: std::collections::HashMap<PartitionKey, usize>,
}

impl<'a, 'b> Engine<'a, 'b> {
    fn new(cfg: &'a RunConfig, workload: &'a Workload, env: RunEnv<'b>) -> Result<Self> {
        let mut encoder = VirtualEncoder::new(cfg.profile, derive_seed(cfg.seed, 0x656e63))?;
        // Warmup call: untimed, before the clock starts.
        encoder.warmup();
        let pool = UploadPool::new(
            cfg.storage.clone(),
            cfg.pool,
            derive_seed(cfg.seed, 0x666c74),
        );
        let skip = if env.resume {
            match &env.backend {
                Some(b) => scan_existing(*b as &dyn Backend, &cfg.output_prefix, &cfg.run_id)?,
                None => HashSet::new(),
            }
        } else {
            HashSet::new()
        };
        let key_index = workload
            .partitions
            .iter()
            .enumerate()
            .map(|(i, p)| (p.key.clone(), i))
            .collect();
        Ok(Engine {
            cfg,
            workload,
            clock: EventClock::default(),
            encoder,
            pool,
            records: Vec::new(),
            mem: Vec::new(),
            ttfo: None,
            encoded: HashSet::new(),
            uploaded: HashSet::new(),
            skip,
            env_backend: env.backend,
            crash_at: env.crash_at,
            crashed: false,
            processed_texts: 0,
            max_batch_bytes: 0,
            key_index,
        })
    }

    fn materialized(&self) -> bool {
        self.workload.config.text_mode == TextMode::Materialized
    }

    fn halted(&self) -> bool {
        self.crash_at.is_some_and(|t| self.clock.now() > t)
    }

    fn serialize_secs(&self, n: u64) -> f64 {
        n as f64 * self.cfg.c_ser
    }

    /// Build the real file bytes for one partition, regenerating texts from
    /// the workload unless the aggregator buffered them.
    fn file_bytes(&mut self, job: &PartitionJob) -> Result<Vec<u8>> {
        let n = job.n;
        let out = self.encoder.encode_rows_untimed(&job.key, n, true)?;
        let view = out.slice(0, n)?;
        match (&job.texts, self.materialized()) {
            (Some(texts), _) => serialize_zero_copy(&job.key, &TextsRef::Bytes(texts), &view),
            (None, true) => {
                let texts: Vec<Vec<u8>> = (0..n)
                    .map(|i| {
                        let len = self.workload.text_len(job.widx, i);
                        materialize_text(self.workload.config.seed, &job.key, i, len)
                    })
                    .collect::<Result<_>>()?;
                serialize_zero_copy(&job.key, &TextsRef::Bytes(&texts), &view)
            }
            (None, false) => {
                let lens: Vec<u32> = self.workload.partition_lens(job.widx).collect();
                serialize_zero_copy(&job.key, &TextsRef::ZeroFilled(&lens), &view)
            }
        }
    }

    fn object_size(&self, job: &PartitionJob) -> u64 {
        encoded_len(&job.key, job.n, job.text_bytes, self.cfg.profile.dims)
    }

    fn commit(&mut self, job: &PartitionJob, completion: f64) -> Result<()> {
        if let Some(crash) = self.crash_at {
            if completion > crash {
                return Ok(());
            }
        }
        self.uploaded.insert(job.key.clone());
        if self.env_backend.is_some() {
            let bytes = self.file_bytes(job)?;
            let path = partition_path(&self.cfg.output_prefix, &self.cfg.run_id, &job.key);
            self.env_backend.as_mut().unwrap().write(&path, &bytes)?;
        }
        Ok(())
    }

    /// Serialize + upload a batch of partition jobs on the worker pool.
    /// Returns (total ser, total upl, last completion).
    fn submit_batch_async(&mut self, ready: f64, jobs: &[PartitionJob]) -> Result<(f64, f64, f64)> {
        let mut t_ser = 0.0;
        let mut t_upl = 0.0;
        let mut last = ready;
        for job in jobs {
            let path = partition_path(&self.cfg.output_prefix, &self.cfg.run_id, &job.key);
            let ticket = self.pool.submit(
                ready,
                self.serialize_secs(job.n),
                self.object_size(job),
                &path,
            );
            t_ser += ticket.t_ser;
            t_upl += ticket.t_upl;
            last = last.max(ticket.completed);
            if ticket.ok {
                self.ttfo = Some(
                    self.ttfo
                        .map_or(ticket.completed, |t: f64| t.min(ticket.completed)),
                );
                self.commit(job, ticket.completed)?;
            }
        }
        Ok((t_ser, t_upl, last))
    }

    /// Serialize + upload a batch on the main timeline (blocking).
    fn submit_batch_sync(&mut self, jobs: &[PartitionJob]) -> Result<(f64, f64, f64)> {
        let mut t_ser = 0.0;
        let mut t_upl = 0.0;
        for job in jobs {
            let ser = self.serialize_secs(job.n);
            self.clock.advance(ser);
            t_ser += ser;
            let path = partition_path(&self.cfg.output_prefix, &self.cfg.run_id, &job.key);
            let plan = crate::storage::plan_attempts(
                &self.cfg.storage,
                &self.cfg.pool,
                derive_seed(self.cfg.seed, 0x666c74),
                &path,
                self.object_size(job),
            );
            self.clock.advance(plan.busy);
            t_upl += plan.busy;
            if !plan.ok {
                return Err(Error::UploadFailed {
                    path,
                    attempts: plan.attempts,
                });
            }
            let done = self.clock.now();
            self.ttfo = Some(self.ttfo.map_or(done, |t: f64| t.min(done)));
            self.commit(job, done)?;
        }
        Ok((t_ser, t_upl, self.clock.now()))
    }

    fn jobs_from_batch(&self, batch: &mut SuperBatch) -> Vec<PartitionJob> {
        batch
            .entries
            .drain(..)
            .map(|entry| {
                let widx = self.key_index[&entry.key];
                let (n, text_bytes, texts) = match entry.payload {
                    PartitionPayload::Metered { n, bytes } => (n, bytes, None),
                    PartitionPayload::Texts(t) => {
                        let bytes = t.iter().map(|x| x.len() as u64).sum();
                        (t.len() as u64, bytes, Some(t))
                    }
                };
                PartitionJob {
                    key: entry.key,
                    widx,
                    n,
                    text_bytes,
                    texts,
                }
            })
            .collect()
    }

    fn record_flush(
        &mut self,
        partition_count: u32,
        text_count: u64,
        t_call: f64,
        t_ser: f64,
        t_upl: f64,
        reason: FlushReason,
    ) {
        let gpu_busy = t_call * self.cfg.profile.gpu_fraction;
        self.records.push(FlushRecord {
            index: self.records.len() as u64,
            partition_count,
            text_count,
            t_enc: gpu_busy,
            t_call,
            t_ser,
            t_upl,
            reason,
        });
    }

    // -- SURGE ---------------------------------------------------------------

    fn run_surge(&mut self, thresholds: Thresholds, async_io: bool) -> Result<()> {
        let mut agg = SurgeAggregator::new(thresholds);
        let materialized = self.materialized();
        for widx in 0..self.workload.partitions.len() {
            let spec = &self.workload.partitions[widx];
            if self.skip.contains(&spec.key) {
                continue;
            }
            if self.halted() {
                self.crashed = true;
                return Ok(());
            }
            let flush = if materialized {
                // Row-level ingestion: the boundary-detection path.
                let mut flush = None;
                for i in 0..spec.n_k {
                    let len = self.workload.text_len(widx, i);
                    let text = materialize_text(self.workload.config.seed, &spec.key, i, len)?;
                    if let Some(f) = agg.ingest_row(&spec.key, Row::Text(text))? {
                        flush = Some(f);
                    }
                }
                flush
            } else {
                agg.add_partition(
                    spec.key.clone(),
                    PartitionPayload::Metered {
                        n: spec.n_k,
                        bytes: spec.total_text_bytes,
                    },
                )
            };
            // Text bytes of the completed partition become resident now.
            self.mem.push(MemEvent {
                at: self.clock.now(),
                delta: spec.total_text_bytes as i64,
            });
            self.processed_texts += spec.n_k;
            if let Some(f) = flush {
                self.process_surge_flush(f, async_io)?;
            }
        }
        if self.halted() {
            self.crashed = true;
            return Ok(());
        }
        if let Some(f) = agg.finalize()? {
            self.process_surge_flush(f, async_io)?;
        }
        Ok(())
    }

    fn process_surge_flush(&mut self, flush: FlushRequest, async_io: bool) -> Result<()> {
        let mut batch = flush.batch;
        let reason = flush.reason;
        let total = batch.total;
        let partitions = batch.partition_count() as u32;
        let text_bytes = batch.total_bytes();
        let emb_bytes = total * self.cfg.profile.dims as u64 * 4;

        let timing = self.encoder.timing(total);
        let enc_start = self.clock.now();
        // Embedding buffer lives from the call start.
        self.mem.push(MemEvent {
            at: enc_start,
            delta: emb_bytes as i64,
        });
        self.clock.advance(timing.charged);
        self.clock
            .advance(self.cfg.profile.per_partition_overhead * partitions as f64);
        if let Some(crash) = self.crash_at {
            if self.clock.now() > crash {
                // The call never completed; the batch is lost.
                self.crashed = true;
                return Ok(());
            }
        }
        for b in &batch.bounds {
            self.encoded.insert(b.key.clone());
        }
        let jobs = self.jobs_from_batch(&mut batch);
        let (t_ser, t_upl, last) = if async_io {
            self.submit_batch_async(self.clock.now(), &jobs)?
        } else {
            self.submit_batch_sync(&jobs)?
        };
        // The flushed batch's buffers are held until its last upload completes.
        self.mem.push(MemEvent {
            at: last,
            delta: -((text_bytes + emb_bytes) as i64),
        });
        self.max_batch_bytes = self.max_batch_bytes.max(text_bytes + emb_bytes);
        self.record_flush(partitions, total, timing.charged, t_ser, t_upl, reason);
        Ok(())
    }

    // -- PBP -----------------------------------------------------------------

    fn run_pbp(&mut self) -> Result<()> {
        for widx in 0..self.workload.partitions.len() {
            let spec = &self.workload.partitions[widx];
            if self.skip.contains(&spec.key) {
                continue;
            }
            if self.halted() {
                self.crashed = true;
                return Ok(());
            }
            let n = spec.n_k;
            let timing = self.encoder.timing(n);
            let start = self.clock.now();
            let data_bytes = spec.total_text_bytes + n * self.cfg.profile.dims as u64 * 4;
            self.mem.push(MemEvent {
                at: start,
                delta: data_bytes as i64,
            });
            self.clock.advance(timing.charged);
            self.clock.advance(self.cfg.profile.per_partition_overhead);
            self.processed_texts += n;
            if let Some(crash) = self.crash_at {
                if self.clock.now() > crash {
                    self.crashed = true;
                    return Ok(());
                }
            }
            self.encoded.insert(spec.key.clone());
            let job = PartitionJob {
                key: spec.key.clone(),
                widx,
                n,
                text_bytes: spec.total_text_bytes,
                texts: None,
            };
            let (t_ser, t_upl, last) =
                self.submit_batch_async(self.clock.now(), std::slice::from_ref(&job))?;
            self.mem.push(MemEvent {
                at: last,
                delta: -(data_bytes as i64),
            });
            self.max_batch_bytes = self.max_batch_bytes.max(data_bytes);
            self.record_flush(1, n, timing.charged, t_ser, t_upl, FlushReason::EndOfStream);
        }
        Ok(())
    }

    // -- FSB -----------------------------------------------------------------

    fn run_fsb(&mut self, batch: u64) -> Result<()> {
        let active: Vec<usize> = (0..self.workload.partitions.len())
            .filter(|&i| !self.skip.contains(&self.workload.partitions[i].key))
            .collect();
        let total: u64 = active
            .iter()
            .map(|&i| self.workload.partitions[i].n_k)
            .sum();
        if total == 0 {
            return Ok(());
        }
        // The whole concatenated text array is resident before encoding starts.
        let all_text_bytes: u64 = active
            .iter()
            .map(|&i| self.workload.partitions[i].total_text_bytes)
            .sum();
        self.mem.push(MemEvent {
            at: 0.0,
            delta: all_text_bytes as i64,
        });

        // Fixed-size chunks over the concatenated stream. Dispatch of chunk
        // j+1 overlaps compute of chunk j, so past the first call only the
        // compute part extends the timeline.
        let chunks = total.div_ceil(batch);
        let mut remaining = total;
        for c in 0..chunks {
            let n = remaining.min(batch);
            remaining -= n;
            let timing = self.encoder.timing(n);
            let start = self.clock.now();
            self.mem.push(MemEvent {
                at: start,
                delta: (n * self.cfg.profile.dims as u64 * 4) as i64,
            });
            let exposed = if c == 0 {
                timing.charged
            } else {
                (timing.charged - self.cfg.profile.cost.c_ipc).max(0.0)
            };
            self.clock.advance(exposed);
            if let Some(crash) = self.crash_at {
                if self.clock.now() > crash {
                    self.crashed = true;
                    return Ok(());
                }
            }
            let reason = if n == batch {
                FlushReason::Efficiency
            } else {
                FlushReason::EndOfStream
            };
            self.record_flush(0, n, timing.charged, 0.0, 0.0, reason);
        }
        self.processed_texts += total;

        // Argsort regroup: memory already peaked; time is configurable and
        // defaults to free.
        self.clock
            .advance(self.cfg.regroup_cost_per_text * total as f64);

        // Only now do per-partition outputs exist. Largest-first submission:
        // the regroup pass knows every size, and the drain is
        // makespan-sensitive.
        let mut order = active.clone();
        order.sort_by(|&a, &b| {
            self.workload.partitions[b]
                .n_k
                .cmp(&self.workload.partitions[a].n_k)
                .then(a.cmp(&b))
        });
        let ready = self.clock.now();
        for widx in order {
            let spec = &self.workload.partitions[widx];
            self.encoded.insert(spec.key.clone());
            let job = PartitionJob {
                key: spec.key.clone(),
                widx,
                n: spec.n_k,
                text_bytes: spec.total_text_bytes,
                texts: None,
            };
            let (_, _, last) = self.submit_batch_async(ready, std::slice::from_ref(&job))?;
            let data = spec.total_text_bytes + spec.n_k * self.cfg.profile.dims as u64 * 4;
            self.mem.push(MemEvent {
                at: last,
                delta: -(data as i64),
            });
        }
        self.max_batch_bytes = all_text_bytes + total * self.cfg.profile.dims as u64 * 4;
        Ok(())
    }

    // -- PB-PBP-LB -----------------------------------------------------------

    fn run_pb_pbp_lb(&mut self, batch: u64) -> Result<()> {
        // Offline size scan from columnar metadata: modeled as free.
        let sizes: Vec<(PartitionKey, u64)> = self
            .workload
            .partitions
            .iter()
            .filter(|p| !self.skip.contains(&p.key))
            .map(|p| (p.key.clone(), p.n_k))
            .collect();
        let bins = ffd_pack(&sizes, batch);
        for bin in bins {
            if self.halted() {
                self.crashed = true;
                return Ok(());
            }
            let total = bin.total;
            let timing = self.encoder.timing(total);
            let start = self.clock.now();
            let text_bytes: u64 = bin
                .partitions
                .iter()
                .map(|(_, widx, _)| self.workload.partitions[*widx].total_text_bytes)
                .sum();
            let emb_bytes = total * self.cfg.profile.dims as u64 * 4;
            self.mem.push(MemEvent {
                at: start,
                delta: (text_bytes + emb_bytes) as i64,
            });
            self.clock.advance(timing.charged);
            self.clock
                .advance(self.cfg.profile.per_partition_overhead * bin.partitions.len() as f64);
            self.processed_texts += total;
            if let Some(crash) = self.crash_at {
                if self.clock.now() > crash {
                    self.crashed = true;
                    return Ok(());
                }
            }
            let jobs: Vec<PartitionJob> = bin
                .partitions
                .iter()
                .map(|(key, widx, n)| {
                    self.encoded.insert(key.clone());
                    PartitionJob {
                        key: key.clone(),
                        widx: *widx,
                        n: *n,
                        text_bytes: self.workload.partitions[*widx].total_text_bytes,
                        texts: None,
                    }
                })
                .collect();
            let (t_ser, t_upl, last) = self.submit_batch_async(self.clock.now(), &jobs)?;
            self.mem.push(MemEvent {
                at: last,
                delta: -((text_bytes + emb_bytes) as i64),
            });
            self.max_batch_bytes = self.max_batch_bytes.max(text_bytes + emb_bytes);
            let reason = if total <= batch {
                FlushReason::Efficiency
            } else {
                FlushReason::EndOfStream
            };
            self.record_flush(
                bin.partitions.len() as u32,
                total,
                timing.charged,
                t_ser,
                t_upl,
                reason,
            );
        }
        Ok(())
    }

    // -- Wrap-up ---------------------------------------------------------------

    fn finish(self) -> Result<RunOutput> {
        let main_end = self.clock.now();
        let drain = if self.crashed {
            // Crash truncation: anything not yet completed is lost.
            self.crash_at.unwrap_or(main_end)
        } else {
            self.pool.drain()?.max(main_end)
        };
        let wall = drain;
        let n = self.processed_texts;

        let is_surge = matches!(
            self.cfg.strategy,
            Strategy::SurgeSync { .. } | Strategy::SurgeAsync { .. }
        );
        let rho = if !is_surge || self.records.is_empty() || self.crashed {
            None
        } else if matches!(self.cfg.strategy, Strategy::SurgeSync { .. }) {
            Some(rho_capacity(&self.records)?)
        } else {
            Some(rho_achieved(&self.records, wall - main_end)?)
        };

        let gpu_secs: f64 = self.records.iter().map(|r| r.t_enc).sum();
        let delta = if wall > 0.0 { gpu_secs / wall } else { 0.0 };
        let throughput = if wall > 0.0 { n as f64 / wall } else { 0.0 };
        let cost = if n > 0 && wall > 0.0 {
            cost_per_million(wall, self.cfg.hourly_rate, n)?
        } else {
            0.0
        };
        let metrics = RunMetrics {
            strategy: self.cfg.strategy.name().to_string(),
            total_texts: n,
            throughput,
            wall,
            ttfo: self.ttfo.unwrap_or(0.0),
            peak_data_mem: track_peak_memory(&self.mem) + self.cfg.runtime_overhead_bytes,
            rho,
            delta,
            gpu_util: delta * self.cfg.profile.intensity,
            encode_calls: self.records.len() as u64,
            flushes: self.records.len() as u64,
            emergency_flushes: self
                .records
                .iter()
                .filter(|r| r.reason == FlushReason::Safety)
                .count() as u64,
            cost_per_m: cost,
        };
        let manifest = RunManifest {
            config: self.cfg.clone(),
            total_texts: self.workload.total_texts(),
            partitions: self.workload.partitions.len(),
        };
        Ok(RunOutput {
            manifest,
            metrics,
            flushes: self.records,
            encoded: self.encoded,
            uploaded: self.uploaded,
            crashed: self.crashed,
            max_batch_bytes: self.max_batch_bytes,
        })
    }
}

impl RunOutput {
    pub fn manifest_hash(&self) -> Result<String> {
        self.manifest.hash()
    }
}

fn derive_seed(seed: u64, salt: u64) -> u64 {
    let mut x = seed ^ salt.wrapping_mul(0x9E3779B97F4A7C15);
    x ^= x >> 30;
    x = x.wrapping_mul(0xBF58476D1CE4E5B9);
    x ^= x >> 27;
    x ^ (x >> 31)
}
