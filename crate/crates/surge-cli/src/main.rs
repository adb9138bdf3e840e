//! Command-line driver: generate workloads, run single pipelines, sweep an
//! axis, evaluate the closed-form predictor, query the decision table, and
//! microbenchmark the serializer.

use std::collections::BTreeMap;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use surge::aggregator::Thresholds;
use surge::columnar::DEFAULT_C_SER;
use surge::costmodel::{self, Preset};
use surge::encoder::EncoderProfile;
use surge::runner::{self, RunConfig, RunEnv, RunOutput, Strategy};
use surge::storage::{StorageProfile, UploadPoolConfig};
use surge::workload::{generate_workload, WorkloadConfig, WorkloadManifest};

#[derive(Parser)]
#[command(
    name = "surge",
    version,
    about = "Partition-aware streaming batching simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic workload and write its manifest as JSON.
    Generate(GenerateArgs),
    /// Run one strategy over a workload and emit RunMetrics.
    Run(RunArgs),
    /// Sweep one axis, emitting a row per configuration.
    Sweep(SweepArgs),
    /// Evaluate the closed-form speedup prediction.
    Predict(PredictArgs),
    /// Map (phi, cv) through the applicability decision table.
    Decide(DecideArgs),
    /// Compare zero-copy vs naive serialization wall time.
    MicrobenchSerializer(MicrobenchArgs),
}

#[derive(Args, Clone)]
struct WorkloadArgs {
    /// Total text count (exact, via rescaling).
    #[arg(long, default_value_t = 10_000_000)]
    n: u64,
    /// Partition count.
    #[arg(long, default_value_t = 4000)]
    p: usize,
    /// Log-space sigma of the size distribution.
    #[arg(long, default_value_t = 1.72)]
    sigma: f64,
    /// Log-space mu of the size distribution.
    #[arg(long, default_value_t = 9.03)]
    mu: f64,
    /// Mean text length in bytes.
    #[arg(long, default_value_t = 47)]
    avg_text_len: u32,
    #[arg(long, default_value_t = 5)]
    seed: u64,
    /// Force materialized texts (default: metered at N >= 1e6).
    #[arg(long, default_value_t = false)]
    materialized: bool,
}

impl WorkloadArgs {
    fn to_config(&self) -> Result<WorkloadConfig> {
        let mut cfg = WorkloadConfig::benchmark(self.p, self.n, self.sigma, self.seed);
        cfg.size_dist.mu_log = self.mu;
        cfg.avg_text_len = self.avg_text_len;
        if self.materialized {
            cfg.text_mode = surge::workload::TextMode::Materialized;
        }
        Ok(cfg)
    }
}

#[derive(Copy, Clone, ValueEnum)]
enum StrategyArg {
    Pbp,
    Fsb,
    SurgeSync,
    SurgeAsync,
    PbPbpLb,
}

#[derive(Copy, Clone, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    workload: WorkloadArgs,
    #[arg(long, value_enum, default_value = "surge-async")]
    strategy: StrategyArg,
    /// Cost preset: L4x4-minilm, L4x2-minilm, L4x2-bge.
    #[arg(long, default_value = "L4x4-minilm")]
    preset: String,
    /// Storage profile: null, hdfs, gcs, s3, cross_region.
    #[arg(long, default_value = "gcs")]
    storage: String,
    /// Efficiency trigger (texts).
    #[arg(long, default_value_t = 100_000)]
    bmin: u64,
    /// Safety trigger (texts); defaults to 5 * bmin.
    #[arg(long)]
    bmax: Option<u64>,
    /// Fixed batch size for fsb / pb-pbp-lb.
    #[arg(long, default_value_t = 100_000)]
    batch: u64,
    /// Upload pool worker count.
    #[arg(long, default_value_t = 32)]
    workers: usize,
    /// Per-attempt transient fault probability.
    #[arg(long, default_value_t = 0.0)]
    fault_rate: f64,
    /// Duration noise CV (0 = deterministic).
    #[arg(long, default_value_t = 0.0)]
    noise_cv: f64,
    /// Output file; defaults to stdout (or `SURGE_OUT_DIR/run.json`).
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "json")]
    format: Format,
    /// Also write per-flush records JSONL next to the metrics.
    #[arg(long)]
    flush_log: Option<PathBuf>,
    /// Workload manifest JSON to run against (overrides --n/--p/--sigma/--seed).
    #[arg(long)]
    manifest: Option<PathBuf>,
}

#[derive(Args)]
struct GenerateArgs {
    #[command(flatten)]
    workload: WorkloadArgs,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Copy, Clone, ValueEnum)]
enum SweepAxis {
    Sigma,
    Bmin,
    Storage,
    Scale,
    ModelPreset,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    workload: WorkloadArgs,
    #[arg(long, value_enum)]
    axis: SweepAxis,
    /// Comma-separated axis values (numbers or names, depending on axis).
    #[arg(long, value_delimiter = ',')]
    values: Vec<String>,
    #[arg(long, default_value = "L4x4-minilm")]
    preset: String,
    #[arg(long, default_value = "gcs")]
    storage: String,
    #[arg(long, default_value_t = 100_000)]
    bmin: u64,
    #[arg(long)]
    bmax: Option<u64>,
    #[arg(long, default_value_t = 32)]
    workers: usize,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "csv")]
    format: Format,
}

#[derive(Args)]
struct PredictArgs {
    #[arg(long, default_value = "L4x4-minilm")]
    preset: String,
    #[arg(long, default_value_t = 10_000_000)]
    n: u64,
    #[arg(long, default_value_t = 4000)]
    p: u64,
    /// Flush count; defaults to ceil(n / bmin).
    #[arg(long)]
    f: Option<u64>,
    #[arg(long, default_value_t = 100_000)]
    bmin: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct DecideArgs {
    #[arg(long)]
    phi: f64,
    #[arg(long)]
    cv: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct MicrobenchArgs {
    /// Row counts to measure, comma-separated.
    #[arg(long, value_delimiter = ',', default_values_t = vec![10_000u64, 50_000, 100_000, 200_000])]
    sizes: Vec<u64>,
    /// Embedding dimension.
    #[arg(long, default_value_t = 384)]
    dims: u32,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    match cli.command {
        Command::Generate(a) => cmd_generate(a),
        Command::Run(a) => cmd_run(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Predict(a) => cmd_predict(a),
        Command::Decide(a) => cmd_decide(a),
        Command::MicrobenchSerializer(a) => cmd_microbench(a),
    }
}

/// Resolve the output target: explicit path, else `SURGE_OUT_DIR/<default_name>`, else stdout.
fn emit(out: &Option<PathBuf>, default_name: &str, content: &str) -> Result<()> {
    let path = match out {
        Some(p) => Some(p.clone()),
        None => std::env::var_os("SURGE_OUT_DIR").map(|d| PathBuf::from(d).join(default_name)),
    };
    match path {
        Some(p) => {
            if let Some(parent) = p.parent() {
                std::fs::create_dir_all(parent)?;
            }
            std::fs::write(&p, content).with_context(|| format!("writing {}", p.display()))?;
            eprintln!("wrote {}", p.display());
        }
        None => println!("{content}"),
    }
    Ok(())
}

fn cmd_generate(a: GenerateArgs) -> Result<()> {
    let cfg = a.workload.to_config()?;
    let w = generate_workload(&cfg)?;
    let stats = w.stats()?;
    eprintln!(
        "generated P={} N={} mean={:.0} median={:.0} cv={:.2} max={}",
        w.partitions.len(),
        w.total_texts(),
        stats.mean,
        stats.median,
        stats.cv,
        stats.max
    );
    let manifest = WorkloadManifest::from_workload(&w);
    emit(&a.out, "workload.json", &manifest.to_json()?)
}

fn build_run_config(a: &RunArgs) -> Result<RunConfig> {
    let preset = Preset::parse(&a.preset)?;
    let thresholds = Thresholds::new(a.bmin, a.bmax.unwrap_or(a.bmin * 5))?;
    let strategy = match a.strategy {
        StrategyArg::Pbp => Strategy::Pbp,
        StrategyArg::Fsb => Strategy::Fsb { batch: a.batch },
        StrategyArg::SurgeSync => Strategy::SurgeSync { thresholds },
        StrategyArg::SurgeAsync => Strategy::SurgeAsync { thresholds },
        StrategyArg::PbPbpLb => Strategy::PbPbpLb { batch: a.batch },
    };
    let storage = StorageProfile::builtin(&a.storage)?.with_fault_rate(a.fault_rate)?;
    let mut profile = EncoderProfile::from_preset(preset);
    profile.noise_cv = a.noise_cv;
    let workload = match &a.manifest {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("reading manifest {}", path.display()))?;
            let manifest = WorkloadManifest::from_json(&text)?;
            // The config alone regenerates the workload; the per-partition
            // list doubles as a consistency check.
            let regenerated = generate_workload(&manifest.config)?;
            if regenerated.partitions.len() != manifest.partitions.len() {
                bail!("manifest partition list does not match its config");
            }
            manifest.config
        }
        None => a.workload.to_config()?,
    };
    let seed = workload.seed;
    let mut cfg = RunConfig::new(workload, strategy, preset, storage);
    cfg.profile = profile;
    cfg.pool = UploadPoolConfig::new(a.workers, 3, 1.0)?;
    cfg.c_ser = DEFAULT_C_SER;
    cfg.seed = seed;
    Ok(cfg)
}

fn cmd_run(a: RunArgs) -> Result<()> {
    let cfg = build_run_config(&a)?;
    let out = runner::run_with(&cfg, RunEnv::default())?;
    if let Some(p) = &a.flush_log {
        std::fs::write(p, surge::telemetry::records_to_jsonl(&out.flushes)?)?;
        eprintln!("wrote {}", p.display());
    }
    let content = match a.format {
        Format::Json => render_run_json(&out)?,
        Format::Csv => {
            let mut rows = vec![run_row(&out)?];
            rows[0].insert("strategy".into(), out.metrics.strategy.clone());
            to_csv(&rows)
        }
    };
    emit(&a.out, "run.json", &content)
}

#[derive(Serialize)]
struct RunReport<'a> {
    manifest_hash: String,
    metrics: &'a surge::telemetry::RunMetrics,
}

fn render_run_json(out: &RunOutput) -> Result<String> {
    let report = RunReport {
        manifest_hash: out.manifest_hash()?,
        metrics: &out.metrics,
    };
    Ok(serde_json::to_string_pretty(&report)?)
}

type Row = BTreeMap<String, String>;

fn run_row(out: &RunOutput) -> Result<Row> {
    let m = &out.metrics;
    let mut row = Row::new();
    row.insert("tput_t_s".into(), format!("{:.0}", m.throughput));
    row.insert("duty_pct".into(), format!("{:.1}", m.delta * 100.0));
    row.insert("gpu_pct".into(), format!("{:.1}", m.gpu_util * 100.0));
    row.insert("time_s".into(), format!("{:.1}", m.wall));
    row.insert("cost_per_m".into(), format!("{:.3}", m.cost_per_m));
    row.insert(
        "rho".into(),
        m.rho.map_or("n/a".into(), |r| format!("{r:.2}")),
    );
    row.insert(
        "mem_gb".into(),
        format!("{:.2}", m.peak_data_mem as f64 / 1e9),
    );
    row.insert("ttfo_s".into(), format!("{:.1}", m.ttfo));
    row.insert("flushes".into(), m.flushes.to_string());
    row.insert("manifest".into(), out.manifest_hash()?);
    Ok(row)
}

fn to_csv(rows: &[Row]) -> String {
    if rows.is_empty() {
        return String::new();
    }
    // Union of keys: axis-specific columns may appear on a subset of rows.
    let headers: std::collections::BTreeSet<&String> = rows.iter().flat_map(|r| r.keys()).collect();
    let mut out = headers
        .iter()
        .map(|h| h.as_str())
        .collect::<Vec<_>>()
        .join(",");
    out.push('\n');
    for row in rows {
        let line: Vec<&str> = headers
            .iter()
            .map(|h| row.get(*h).map_or("", |v| v.as_str()))
            .collect();
        out.push_str(&line.join(","));
        out.push('\n');
    }
    out
}

fn cmd_sweep(a: SweepArgs) -> Result<()> {
    if a.values.is_empty() {
        bail!("sweep requires at least one --values entry");
    }
    let preset = Preset::parse(&a.preset)?;
    let thresholds = Thresholds::new(a.bmin, a.bmax.unwrap_or(a.bmin * 5))?;
    let storage = StorageProfile::builtin(&a.storage)?;
    let base = a.workload.clone();
    let mut rows: Vec<Row> = Vec::new();

    let run_one = |wl: WorkloadConfig,
                   strategy: Strategy,
                   preset: Preset,
                   storage: StorageProfile,
                   extra: &[(&str, String)]|
     -> Result<Row> {
        let mut cfg = RunConfig::new(wl, strategy, preset, storage);
        cfg.pool = UploadPoolConfig::new(a.workers, 3, 1.0)?;
        cfg.seed = base.seed;
        let out = runner::run(&cfg)?;
        let mut row = run_row(&out)?;
        row.insert("strategy".into(), out.metrics.strategy.clone());
        for (k, v) in extra {
            row.insert((*k).into(), v.clone());
        }
        Ok(row)
    };

    match a.axis {
        SweepAxis::Sigma => {
            for v in &a.values {
                let sigma: f64 = v.parse().context("sigma value")?;
                let wl = WorkloadConfig::benchmark(base.p, base.n, sigma, base.seed);
                let pbp = run_one(
                    wl.clone(),
                    Strategy::Pbp,
                    preset,
                    storage.clone(),
                    &[("sigma", v.clone())],
                )?;
                let mut srg = run_one(
                    wl,
                    Strategy::SurgeAsync { thresholds },
                    preset,
                    storage.clone(),
                    &[("sigma", v.clone())],
                )?;
                let speedup: f64 = srg.get("tput_t_s").unwrap().parse::<f64>()?
                    / pbp.get("tput_t_s").unwrap().parse::<f64>()?;
                srg.insert("speedup".into(), format!("{speedup:.3}"));
                rows.push(pbp);
                rows.push(srg);
            }
        }
        SweepAxis::Bmin => {
            for v in &a.values {
                let bmin: u64 = v.parse().context("bmin value")?;
                let thr = Thresholds::new(bmin, bmin * 5)?;
                let wl = WorkloadConfig::benchmark(base.p, base.n, base.sigma, base.seed);
                let mut row = run_one(
                    wl,
                    Strategy::SurgeAsync { thresholds: thr },
                    preset,
                    storage.clone(),
                    &[("bmin", v.clone())],
                )?;
                let flushes: f64 = row.get("flushes").unwrap().parse()?;
                row.insert(
                    "parts_per_batch".into(),
                    format!("{:.1}", base.p as f64 / flushes),
                );
                rows.push(row);
            }
        }
        SweepAxis::Storage => {
            for v in &a.values {
                let prof = StorageProfile::builtin(v)?;
                let wl = WorkloadConfig::benchmark(base.p, base.n, base.sigma, base.seed);
                rows.push(run_one(
                    wl.clone(),
                    Strategy::SurgeSync { thresholds },
                    preset,
                    prof.clone(),
                    &[("storage", v.clone())],
                )?);
                rows.push(run_one(
                    wl,
                    Strategy::SurgeAsync { thresholds },
                    preset,
                    prof,
                    &[("storage", v.clone())],
                )?);
            }
        }
        SweepAxis::Scale => {
            for v in &a.values {
                let n: u64 = v.parse().context("scale value (texts)")?;
                // P scales proportionally with N; metered above 1e6.
                let p = ((n / 2500).max(1)) as usize;
                let wl = WorkloadConfig::benchmark(p, n, base.sigma, base.seed);
                rows.push(run_one(
                    wl.clone(),
                    Strategy::SurgeAsync { thresholds },
                    preset,
                    storage.clone(),
                    &[("n", v.clone())],
                )?);
                rows.push(run_one(
                    wl,
                    Strategy::Fsb { batch: a.bmin },
                    preset,
                    storage.clone(),
                    &[("n", v.clone())],
                )?);
            }
        }
        SweepAxis::ModelPreset => {
            for v in &a.values {
                let preset = Preset::parse(v)?;
                let wl = WorkloadConfig::benchmark(base.p, base.n, base.sigma, base.seed);
                for strategy in [
                    Strategy::Pbp,
                    Strategy::Fsb { batch: a.bmin },
                    Strategy::SurgeAsync { thresholds },
                ] {
                    rows.push(run_one(
                        wl.clone(),
                        strategy,
                        preset,
                        storage.clone(),
                        &[("preset", v.clone())],
                    )?);
                }
            }
        }
    }

    let content = match a.format {
        Format::Csv => to_csv(&rows),
        Format::Json => serde_json::to_string_pretty(&rows)?,
    };
    emit(&a.out, "sweep.csv", &content)
}

fn cmd_predict(a: PredictArgs) -> Result<()> {
    let preset = Preset::parse(&a.preset)?;
    let flushes =
        a.f.unwrap_or_else(|| costmodel::predicted_flushes(a.n, a.bmin));
    let pred = costmodel::predict_speedup(a.n, a.p, flushes, &preset.cost())?;
    emit(
        &a.out,
        "predict.json",
        &serde_json::to_string_pretty(&pred)?,
    )
}

fn cmd_decide(a: DecideArgs) -> Result<()> {
    let rec = costmodel::recommend(a.phi, a.cv)?;
    emit(&a.out, "decide.json", &serde_json::to_string_pretty(&rec)?)
}

fn cmd_microbench(a: MicrobenchArgs) -> Result<()> {
    use std::time::Instant;
    use surge::columnar::{serialize_naive, serialize_zero_copy, TextsRef};
    use surge::encoder::VirtualEncoder;
    use surge::workload::PartitionKey;

    let mut profile = EncoderProfile::from_preset(Preset::L4x4Minilm);
    profile.dims = a.dims;
    let enc = VirtualEncoder::new(profile, 0)?;
    let mut rows: Vec<Row> = Vec::new();
    for &n in &a.sizes {
        let key = PartitionKey(format!("bench{n}"));
        let matrix = enc.encode_rows_untimed(&key, n, true)?;
        let view = matrix.slice(0, n)?;
        let lens: Vec<u32> = (0..n).map(|i| 30 + (i % 35) as u32).collect();
        let texts = TextsRef::ZeroFilled(&lens);

        let reps = if n <= 50_000 { 5 } else { 3 };
        let mut best_zero = f64::INFINITY;
        let mut best_naive = f64::INFINITY;
        let mut bytes = 0usize;
        for _ in 0..reps {
            let t = Instant::now();
            let out = serialize_zero_copy(&key, &texts, &view)?;
            best_zero = best_zero.min(t.elapsed().as_secs_f64());
            bytes = out.len();
            let t = Instant::now();
            let out2 = serialize_naive(&key, &texts, &view)?;
            best_naive = best_naive.min(t.elapsed().as_secs_f64());
            assert_eq!(out, out2);
        }
        let mut row = Row::new();
        row.insert("n".into(), n.to_string());
        row.insert("bytes".into(), bytes.to_string());
        row.insert("naive_s".into(), format!("{best_naive:.6}"));
        row.insert("zero_copy_s".into(), format!("{best_zero:.6}"));
        row.insert("ratio".into(), format!("{:.1}", best_naive / best_zero));
        rows.push(row);
    }
    emit(&a.out, "microbench.csv", &to_csv(&rows))
}
