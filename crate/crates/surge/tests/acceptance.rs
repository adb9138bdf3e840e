//! Acceptance suite: one test per criterion, each printing a PASS line with
//! the measured values (visible under `--nocapture`).
//!
//! Tolerances are pinned in the constants below, next to the targets they
//! gate. The suite runs entirely on the virtual clock; the full set of
//! desk-scale reproductions finishes in seconds.

use std::alloc::{GlobalAlloc, Layout, System};
use std::sync::atomic::{AtomicUsize, Ordering};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::Distribution;

use surge::aggregator::{FlushReason, PartitionPayload, SurgeAggregator, Thresholds};
use surge::columnar::{serialize_naive, serialize_zero_copy, TextsRef};
use surge::costmodel::{
    expected_fill_ratio, predict_speedup, predicted_flushes, recommend, Preset, Verdict,
};
use surge::encoder::{Encoder, EncoderProfile, VirtualEncoder};
use surge::runner::{ffd_pack, run_with, run_workload, RunConfig, RunEnv, RunOutput, Strategy};
use surge::storage::{Backend, FsBackend, StorageProfile};
use surge::workload::{
    generate_workload, LogNormalParams, PartitionKey, SizeStats, TextMode, Workload, WorkloadConfig,
};

// Counting allocator: criterion 10 asserts allocation complexity directly.
struct CountingAlloc;
static ALLOCATIONS: AtomicUsize = AtomicUsize::new(0);

unsafe impl GlobalAlloc for CountingAlloc {
    unsafe fn alloc(&self, layout: Layout) -> *mut u8 {
        ALLOCATIONS.fetch_add(1, Ordering::Relaxed);
        unsafe { System.alloc(layout) }
    }
    unsafe fn dealloc(&self, ptr: *mut u8, layout: Layout) {
        unsafe { System.dealloc(ptr, layout) }
    }
    unsafe fn realloc(&self, ptr: *mut u8, layout: Layout, new_size: usize) -> *mut u8 {
        ALLOCATIONS.fetch_add(1, Ordering::Relaxed);
        unsafe { System.realloc(ptr, layout, new_size) }
    }
}

#[global_allocator]
static GLOBAL: CountingAlloc = CountingAlloc;

// -- Pinned experiment constants ------------------------------------------

const SEED: u64 = 5;
const DESK_N: u64 = 10_000_000;
const DESK_P: usize = 4000;

// Reference-pipeline measurements the suite reproduces.
const TARGET_ALPHA: f64 = 0.934;
const TARGET_SPEEDUP: f64 = 1.89;
const TARGET_SURGE_ASYNC_TPUT: f64 = 26_413.0;
const TARGET_PBP_TPUT: f64 = 13_766.0;
const TARGET_FSB_TPUT: f64 = 27_074.0;
const TARGET_FILL_RATIO: f64 = 1.185;
const TARGET_SIGMA_SPEEDUP: f64 = 1.47;
const TARGET_FFD_BINS: f64 = 91.0;

fn desk_workload(sigma: f64) -> WorkloadConfig {
    WorkloadConfig::benchmark(DESK_P, DESK_N, sigma, SEED)
}

fn desk_cfg(strategy: Strategy, preset: Preset, storage: StorageProfile) -> RunConfig {
    RunConfig::new(desk_workload(1.72), strategy, preset, storage)
}

fn run_on(workload: &Workload, cfg: &RunConfig) -> RunOutput {
    run_workload(cfg, workload, RunEnv::default()).unwrap()
}

fn rel_err(measured: f64, target: f64) -> f64 {
    (measured - target).abs() / target
}

#[test]
fn criterion_01_cost_model_identity() {
    let pred = predict_speedup(
        DESK_N,
        DESK_P as u64,
        predicted_flushes(DESK_N, 100_000),
        &Preset::L4x4Minilm.cost(),
    )
    .unwrap();
    assert!(
        (pred.alpha - TARGET_ALPHA).abs() <= 0.001,
        "alpha {} not within 0.001 of {TARGET_ALPHA}",
        pred.alpha
    );
    assert!(
        (pred.speedup - TARGET_SPEEDUP).abs() <= 0.01,
        "speedup {} not within 0.01 of {TARGET_SPEEDUP}",
        pred.speedup
    );
    println!(
        "criterion 01 PASS: alpha={:.4} (target {TARGET_ALPHA}±0.001), speedup={:.4} (target {TARGET_SPEEDUP}±0.01)",
        pred.alpha, pred.speedup
    );
}

#[test]
fn criterion_02_simulator_matches_closed_forms() {
    let preset = Preset::L4x4Minilm;
    let params = preset.cost();
    let workload = generate_workload(&desk_workload(1.72)).unwrap();
    let pred = predict_speedup(
        DESK_N,
        DESK_P as u64,
        predicted_flushes(DESK_N, 100_000),
        &params,
    )
    .unwrap();

    // Deterministic (noise off): within 0.5%.
    let pbp = run_on(
        &workload,
        &desk_cfg(Strategy::Pbp, preset, StorageProfile::gcs()),
    );
    let surge = run_on(
        &workload,
        &desk_cfg(
            Strategy::SurgeAsync {
                thresholds: Thresholds::DEFAULT,
            },
            preset,
            StorageProfile::gcs(),
        ),
    );
    let pbp_err = rel_err(pbp.metrics.wall, pred.t_pbp);
    let surge_err = rel_err(surge.metrics.wall, pred.t_batched);
    assert!(
        pbp_err <= 0.005,
        "PBP wall {} vs model {} ({:.3}%)",
        pbp.metrics.wall,
        pred.t_pbp,
        pbp_err * 100.0
    );
    assert!(
        surge_err <= 0.005,
        "SURGE wall {} vs model {} ({:.3}%)",
        surge.metrics.wall,
        pred.t_batched,
        surge_err * 100.0
    );

    // noise_cv = 0.005: within 2%.
    let mut noisy_pbp_cfg = desk_cfg(Strategy::Pbp, preset, StorageProfile::gcs());
    noisy_pbp_cfg.profile.noise_cv = 0.005;
    let mut noisy_surge_cfg = desk_cfg(
        Strategy::SurgeAsync {
            thresholds: Thresholds::DEFAULT,
        },
        preset,
        StorageProfile::gcs(),
    );
    noisy_surge_cfg.profile.noise_cv = 0.005;
    let noisy_pbp = run_on(&workload, &noisy_pbp_cfg);
    let noisy_surge = run_on(&workload, &noisy_surge_cfg);
    let noisy_pbp_err = rel_err(noisy_pbp.metrics.wall, pred.t_pbp);
    let noisy_surge_err = rel_err(noisy_surge.metrics.wall, pred.t_batched);
    assert!(
        noisy_pbp_err <= 0.02,
        "noisy PBP error {:.3}%",
        noisy_pbp_err * 100.0
    );
    assert!(
        noisy_surge_err <= 0.02,
        "noisy SURGE error {:.3}%",
        noisy_surge_err * 100.0
    );

    println!(
        "criterion 02 PASS: deterministic err PBP {:.3}% / SURGE {:.3}% (<=0.5%); noisy err {:.3}% / {:.3}% (<=2%)",
        pbp_err * 100.0,
        surge_err * 100.0,
        noisy_pbp_err * 100.0,
        noisy_surge_err * 100.0
    );
}

#[test]
fn criterion_03_table1_desk_reproduction() {
    let preset = Preset::L4x4Minilm;
    let workload = generate_workload(&desk_workload(1.72)).unwrap();
    let thr = Thresholds::DEFAULT;

    let surge_async = run_on(
        &workload,
        &desk_cfg(
            Strategy::SurgeAsync { thresholds: thr },
            preset,
            StorageProfile::gcs(),
        ),
    );
    let surge_sync = run_on(
        &workload,
        &desk_cfg(
            Strategy::SurgeSync { thresholds: thr },
            preset,
            StorageProfile::gcs(),
        ),
    );
    let pbp = run_on(
        &workload,
        &desk_cfg(Strategy::Pbp, preset, StorageProfile::gcs()),
    );
    let fsb = run_on(
        &workload,
        &desk_cfg(
            Strategy::Fsb { batch: 100_000 },
            preset,
            StorageProfile::gcs(),
        ),
    );

    let sa = surge_async.metrics.throughput;
    let pb = pbp.metrics.throughput;
    let fs = fsb.metrics.throughput;
    assert!(
        rel_err(sa, TARGET_SURGE_ASYNC_TPUT) <= 0.03,
        "surge-async {sa:.0} vs {TARGET_SURGE_ASYNC_TPUT}"
    );
    assert!(
        rel_err(pb, TARGET_PBP_TPUT) <= 0.03,
        "pbp {pb:.0} vs {TARGET_PBP_TPUT}"
    );
    assert!(
        rel_err(fs, TARGET_FSB_TPUT) <= 0.03,
        "fsb {fs:.0} vs {TARGET_FSB_TPUT}"
    );

    let degradation = 1.0 - surge_sync.metrics.throughput / sa;
    assert!(
        degradation >= 0.12,
        "sync degradation {:.1}% < 12%",
        degradation * 100.0
    );

    println!(
        "criterion 03 PASS: surge-async {sa:.0} ({:+.2}%), pbp {pb:.0} ({:+.2}%), fsb {fs:.0} ({:+.2}%), sync -{:.1}%",
        (sa / TARGET_SURGE_ASYNC_TPUT - 1.0) * 100.0,
        (pb / TARGET_PBP_TPUT - 1.0) * 100.0,
        (fs / TARGET_FSB_TPUT - 1.0) * 100.0,
        degradation * 100.0
    );
}

#[test]
fn criterion_04_memory_bound_adversarial_and_fsb_exact() {
    // Base sizes: heavy-tailed, matching the benchmark shape at smaller P
    // so a thousand permutations stay fast.
    let base = generate_workload(&WorkloadConfig::benchmark(400, 1_000_000, 1.72, SEED)).unwrap();
    let sizes: Vec<u64> = base.partitions.iter().map(|p| p.n_k).collect();
    let thresholds = Thresholds::DEFAULT;

    let mut orders: Vec<Vec<u64>> = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for _ in 0..1_000 {
        let mut order = sizes.clone();
        // Fisher-Yates with the seeded stream.
        for i in (1..order.len()).rev() {
            let u: u64 = rand::Rng::random(&mut rng);
            order.swap(i, (u % (i as u64 + 1)) as usize);
        }
        orders.push(order);
    }
    // Crafted worst cases.
    let mut asc = sizes.clone();
    asc.sort_unstable();
    let desc: Vec<u64> = asc.iter().rev().copied().collect();
    let mut largest_last = asc.clone();
    let giant = largest_last.pop().unwrap();
    largest_last.push(giant);
    let mut alternating = Vec::with_capacity(sizes.len());
    let (mut lo, mut hi) = (0usize, asc.len() - 1);
    while lo <= hi {
        alternating.push(asc[lo]);
        if lo != hi {
            alternating.push(asc[hi]);
        }
        lo += 1;
        hi = hi.saturating_sub(1);
        if hi == 0 {
            break;
        }
    }
    orders.push(asc);
    orders.push(desc);
    orders.push(largest_last);
    orders.push(alternating);

    let mut worst_headroom = f64::INFINITY;
    for order in &orders {
        let mut agg = SurgeAggregator::new(thresholds);
        let mut n_max_seen = 0u64;
        for (i, &n) in order.iter().enumerate() {
            n_max_seen = n_max_seen.max(n);
            let flush = agg.add_partition(
                PartitionKey(format!("p{i}")),
                PartitionPayload::Metered { n, bytes: 0 },
            );
            let buffered = agg.pending_total() + flush.map_or(0, |f| f.batch.total);
            let bound = thresholds.b_min + n_max_seen;
            assert!(buffered <= bound, "buffered {buffered} > bound {bound}");
            worst_headroom = worst_headroom.min((bound - buffered) as f64);
        }
        agg.finalize().unwrap();
    }

    // FSB data-resident peak is exactly N*(L + 4d).
    let workload = generate_workload(&desk_workload(1.72)).unwrap();
    let fsb = run_on(
        &workload,
        &desk_cfg(
            Strategy::Fsb { batch: 100_000 },
            Preset::L4x4Minilm,
            StorageProfile::gcs(),
        ),
    );
    let expected = workload.total_text_bytes() + DESK_N * 384 * 4;
    assert_eq!(
        fsb.metrics.peak_data_mem, expected,
        "FSB peak must equal N*(L+4d) exactly"
    );

    println!(
        "criterion 04 PASS: {} orders held total <= B_min+n_max (tightest headroom {} texts); FSB peak {} bytes == N*(L+4d) exactly",
        orders.len(),
        worst_headroom,
        fsb.metrics.peak_data_mem
    );
}

#[test]
fn criterion_05_fill_ratio_formula_oracle_aggregator() {
    let mean = 8412.0;
    let std = 17_660.0;
    let b_min = 100_000u64;
    let stats = SizeStats {
        mean,
        std,
        cv: std / mean,
        median: mean,
        min: 1,
        max: 1,
        total: 0,
    };
    let formula = expected_fill_ratio(&stats, b_min).unwrap();
    assert!((formula - TARGET_FILL_RATIO).abs() < 0.001);

    // Independent Monte Carlo renewal oracle: running sums of
    // moment-matched log-normal draws until first crossing of B_min.
    let params = LogNormalParams::from_moments(mean, std).unwrap();
    let dist = rand_distr::LogNormal::new(params.mu_log, params.sigma_log).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let trials = 10_000;
    let mut acc = 0.0;
    for _ in 0..trials {
        let mut s = 0.0f64;
        while s < b_min as f64 {
            s += dist.sample(&mut rng).round().max(1.0);
        }
        acc += s / b_min as f64;
    }
    let mc = acc / trials as f64;
    assert!(
        (mc - formula).abs() <= 0.02,
        "Monte Carlo fill {mc:.4} not within 0.02 of formula {formula:.4}"
    );

    // Aggregator route: >= 10^4 efficiency flushes over the same size law.
    let mut agg = SurgeAggregator::new(Thresholds::new(b_min, 5 * b_min).unwrap());
    let mut rng = ChaCha8Rng::seed_from_u64(43);
    let mut fills = Vec::new();
    let mut i = 0u64;
    while fills.len() < 10_000 {
        let n = dist.sample(&mut rng).round().max(1.0) as u64;
        if let Some(f) = agg.add_partition(
            PartitionKey(format!("p{i}")),
            PartitionPayload::Metered { n, bytes: 0 },
        ) {
            if f.reason == FlushReason::Efficiency {
                fills.push(f.batch.total as f64 / b_min as f64);
            }
        }
        i += 1;
    }
    let agg_mean: f64 = fills.iter().sum::<f64>() / fills.len() as f64;
    assert!(
        (agg_mean - formula).abs() <= 0.02,
        "aggregator fill {agg_mean:.4} not within 0.02 of formula {formula:.4}"
    );

    println!(
        "criterion 05 PASS: formula {formula:.4}, Monte Carlo {mc:.4}, aggregator {agg_mean:.4} (±0.02)"
    );
}

#[test]
fn criterion_06_sigma_sweep_speedup_invariance() {
    let preset = Preset::L4x2Minilm;
    let thr = Thresholds::DEFAULT;
    let mut speedups = Vec::new();
    let mut emergency = Vec::new();
    for sigma in [1.0, 1.72, 2.5] {
        let workload = generate_workload(&desk_workload(sigma)).unwrap();
        let mut pbp_cfg = desk_cfg(Strategy::Pbp, preset, StorageProfile::gcs());
        pbp_cfg.workload = desk_workload(sigma);
        let mut surge_cfg = desk_cfg(
            Strategy::SurgeAsync { thresholds: thr },
            preset,
            StorageProfile::gcs(),
        );
        surge_cfg.workload = desk_workload(sigma);
        let pbp = run_on(&workload, &pbp_cfg);
        let surge = run_on(&workload, &surge_cfg);
        let speedup = surge.metrics.throughput / pbp.metrics.throughput;
        assert!(
            rel_err(speedup, TARGET_SIGMA_SPEEDUP) <= 0.05,
            "sigma {sigma}: speedup {speedup:.3} not within 5% of {TARGET_SIGMA_SPEEDUP}"
        );
        speedups.push((sigma, speedup));
        emergency.push((sigma, surge.metrics.emergency_flushes));
    }
    for &(sigma, e) in &emergency {
        if sigma < 2.5 {
            assert_eq!(e, 0, "unexpected safety flush at sigma {sigma}");
        } else {
            assert!(e >= 1, "no safety flush fired at sigma {sigma}");
        }
    }
    println!(
        "criterion 06 PASS: speedups {:?} within ±5% of {TARGET_SIGMA_SPEEDUP}; safety flushes {:?}",
        speedups
            .iter()
            .map(|(s, v)| format!("σ={s}:{v:.3}"))
            .collect::<Vec<_>>(),
        emergency
    );
}

#[test]
fn criterion_07_storage_sweep() {
    let preset = Preset::L4x4Minilm;
    let thr = Thresholds::DEFAULT;
    let workload = generate_workload(&desk_workload(1.72)).unwrap();
    let mut async_tputs = Vec::new();
    let mut cross_sync = None;
    let mut cross_async = None;
    for name in StorageProfile::BUILTIN_NAMES {
        let storage = StorageProfile::builtin(name).unwrap();
        let asyn = run_on(
            &workload,
            &desk_cfg(
                Strategy::SurgeAsync { thresholds: thr },
                preset,
                storage.clone(),
            ),
        );
        let sync = run_on(
            &workload,
            &desk_cfg(Strategy::SurgeSync { thresholds: thr }, preset, storage),
        );
        async_tputs.push(asyn.metrics.throughput);
        if name == "cross_region" {
            cross_sync = Some(sync);
            cross_async = Some(asyn);
        }
    }
    let max = async_tputs.iter().cloned().fold(f64::MIN, f64::max);
    let min = async_tputs.iter().cloned().fold(f64::MAX, f64::min);
    let spread = (max - min) / max;
    assert!(
        spread <= 0.02,
        "async throughput spread {:.2}% > 2%",
        spread * 100.0
    );

    let sync = cross_sync.unwrap();
    let asyn = cross_async.unwrap();
    let degradation = 1.0 - sync.metrics.throughput / asyn.metrics.throughput;
    assert!(
        degradation >= 0.40,
        "cross-region sync degradation {:.1}% < 40%",
        degradation * 100.0
    );
    let rho = sync.metrics.rho.unwrap();
    assert!(
        (0.40..=0.60).contains(&rho),
        "cross-region sync rho {rho:.3} outside [0.40, 0.60]"
    );

    println!(
        "criterion 07 PASS: async spread {:.2}% (<=2%), cross-region sync -{:.1}% (>=40%), rho {rho:.3} in [0.40,0.60]",
        spread * 100.0,
        degradation * 100.0
    );
}

#[test]
fn criterion_08_ttfo_shape_across_scale() {
    let preset = Preset::L4x4Minilm;
    let thr = Thresholds::DEFAULT;
    let mut surge_ttfo = Vec::new();
    let mut fsb_points = Vec::new();
    for millions in [1u64, 5, 10, 25, 50] {
        let n = millions * 1_000_000;
        let p = (n / 2500) as usize;
        let wl_cfg = WorkloadConfig::benchmark(p, n, 1.72, SEED);
        let workload = generate_workload(&wl_cfg).unwrap();
        let mut surge_cfg = RunConfig::new(
            wl_cfg.clone(),
            Strategy::SurgeAsync { thresholds: thr },
            preset,
            StorageProfile::gcs(),
        );
        surge_cfg.seed = SEED;
        let mut fsb_cfg = RunConfig::new(
            wl_cfg,
            Strategy::Fsb { batch: 100_000 },
            preset,
            StorageProfile::gcs(),
        );
        fsb_cfg.seed = SEED;
        let surge = run_on(&workload, &surge_cfg);
        let fsb = run_on(&workload, &fsb_cfg);
        surge_ttfo.push(surge.metrics.ttfo);
        fsb_points.push((n as f64, fsb.metrics.ttfo));
    }

    let mean = surge_ttfo.iter().sum::<f64>() / surge_ttfo.len() as f64;
    for (&t, m) in surge_ttfo.iter().zip([1, 5, 10, 25, 50]) {
        assert!(
            (t - mean).abs() / mean <= 0.10,
            "SURGE TTFO {t:.2}s at {m}M deviates >10% from mean {mean:.2}s"
        );
    }

    // Least-squares fit of FSB TTFO against N.
    let k = fsb_points.len() as f64;
    let sx: f64 = fsb_points.iter().map(|(x, _)| x).sum();
    let sy: f64 = fsb_points.iter().map(|(_, y)| y).sum();
    let sxx: f64 = fsb_points.iter().map(|(x, _)| x * x).sum();
    let sxy: f64 = fsb_points.iter().map(|(x, y)| x * y).sum();
    let slope = (k * sxy - sx * sy) / (k * sxx - sx * sx);
    let intercept = (sy - slope * sx) / k;
    let ss_res: f64 = fsb_points
        .iter()
        .map(|(x, y)| (y - (slope * x + intercept)).powi(2))
        .sum();
    let ss_tot: f64 = fsb_points.iter().map(|(_, y)| (y - sy / k).powi(2)).sum();
    let r2 = 1.0 - ss_res / ss_tot;
    assert!(r2 > 0.99, "FSB TTFO linearity R^2 = {r2:.5}");

    println!(
        "criterion 08 PASS: SURGE TTFO {:?} (±10% of {mean:.2}s); FSB TTFO R²={r2:.5} slope={slope:.3e} s/text",
        surge_ttfo.iter().map(|t| format!("{t:.2}")).collect::<Vec<_>>()
    );
}

#[test]
fn criterion_09_pb_pbp_lb_comparison() {
    let preset = Preset::L4x2Minilm;
    let workload = generate_workload(&desk_workload(1.72)).unwrap();
    let sizes: Vec<(PartitionKey, u64)> = workload
        .partitions
        .iter()
        .map(|p| (p.key.clone(), p.n_k))
        .collect();
    let bins = ffd_pack(&sizes, 100_000);
    let bin_count = bins.len() as f64;
    assert!(
        rel_err(bin_count, TARGET_FFD_BINS) <= 0.20,
        "FFD bin count {bin_count} not within 20% of {TARGET_FFD_BINS}"
    );

    let mut pb_cfg = desk_cfg(
        Strategy::PbPbpLb { batch: 100_000 },
        preset,
        StorageProfile::gcs(),
    );
    pb_cfg.workload = desk_workload(1.72);
    let mut surge_cfg = desk_cfg(
        Strategy::SurgeAsync {
            thresholds: Thresholds::DEFAULT,
        },
        preset,
        StorageProfile::gcs(),
    );
    surge_cfg.workload = desk_workload(1.72);
    let pb = run_on(&workload, &pb_cfg);
    let surge = run_on(&workload, &surge_cfg);
    let ratio = pb.metrics.ttfo / surge.metrics.ttfo;
    assert!(ratio >= 1.5, "PB-PBP-LB TTFO ratio {ratio:.2} < 1.5");

    // At sigma 2.5 FFD emits an unbounded bin, while the aggregator never
    // buffers past B_min + n_max.
    let heavy = generate_workload(&desk_workload(2.5)).unwrap();
    let heavy_sizes: Vec<(PartitionKey, u64)> = heavy
        .partitions
        .iter()
        .map(|p| (p.key.clone(), p.n_k))
        .collect();
    let heavy_bins = ffd_pack(&heavy_sizes, 100_000);
    let b_max = Thresholds::DEFAULT.b_max;
    let oversized = heavy_bins.iter().filter(|b| b.total > b_max).count();
    assert!(oversized >= 1, "no FFD bin exceeded B_max at sigma 2.5");

    let mut agg = SurgeAggregator::new(Thresholds::DEFAULT);
    let mut n_max_seen = 0u64;
    let mut max_buffered = 0u64;
    for p in &heavy.partitions {
        n_max_seen = n_max_seen.max(p.n_k);
        let flush = agg.add_partition(
            p.key.clone(),
            PartitionPayload::Metered { n: p.n_k, bytes: 0 },
        );
        let buffered = agg.pending_total() + flush.map_or(0, |f| f.batch.total);
        assert!(buffered <= Thresholds::DEFAULT.b_min + n_max_seen);
        max_buffered = max_buffered.max(buffered);
    }
    println!(
        "criterion 09 PASS: {bin_count} FFD bins (91±20%), TTFO ratio {ratio:.2} (>=1.5), σ=2.5 oversized bins {oversized} (max {:.0}K texts) vs aggregator max buffer {:.0}K <= bound",
        heavy_bins.iter().map(|b| b.total).max().unwrap() as f64 / 1000.0,
        max_buffered as f64 / 1000.0
    );
}

#[test]
fn criterion_10_serializer_equivalence_allocations_speed() {
    // Byte identity over 10^3 randomized partitions.
    let mut profile = EncoderProfile::from_preset(Preset::L4x4Minilm);
    profile.dims = 24;
    let mut enc = VirtualEncoder::new(profile, 7).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for case in 0..1_000u64 {
        let n = 1 + (rand::Rng::random::<u64>(&mut rng) % 120);
        let key = PartitionKey(format!("rand{case}"));
        let out = enc.encode_rows(&key, n, true).unwrap();
        let view = out.matrix.slice(0, n).unwrap();
        let lens: Vec<u32> = (0..n).map(|i| 1 + ((case + i) % 40) as u32).collect();
        let texts = TextsRef::ZeroFilled(&lens);
        let a = serialize_zero_copy(&key, &texts, &view).unwrap();
        let b = serialize_naive(&key, &texts, &view).unwrap();
        assert_eq!(a, b, "paths diverged on case {case}");
    }

    // Zero-copy allocation count is O(1) in n; naive grows linearly.
    let mut profile = EncoderProfile::from_preset(Preset::L4x4Minilm);
    profile.dims = 64;
    let enc = VirtualEncoder::new(profile, 0).unwrap();
    let mut zero_counts = Vec::new();
    let mut naive_counts = Vec::new();
    for n in [2_000u64, 8_000, 32_000] {
        let key = PartitionKey(format!("alloc{n}"));
        let matrix = enc.encode_rows_untimed(&key, n, true).unwrap();
        let view = matrix.slice(0, n).unwrap();
        let lens: Vec<u32> = (0..n).map(|i| 20 + (i % 9) as u32).collect();
        let texts = TextsRef::ZeroFilled(&lens);
        let _ = serialize_zero_copy(&key, &texts, &view).unwrap();
        let before = ALLOCATIONS.load(Ordering::SeqCst);
        let _ = serialize_zero_copy(&key, &texts, &view).unwrap();
        zero_counts.push(ALLOCATIONS.load(Ordering::SeqCst) - before);
        let before = ALLOCATIONS.load(Ordering::SeqCst);
        let _ = serialize_naive(&key, &texts, &view).unwrap();
        naive_counts.push((n, ALLOCATIONS.load(Ordering::SeqCst) - before));
    }
    assert!(
        zero_counts.iter().all(|&c| c <= 4),
        "zero-copy allocs {zero_counts:?}"
    );
    assert_eq!(
        zero_counts[0], zero_counts[2],
        "zero-copy alloc count varies with n"
    );
    for &(n, c) in &naive_counts {
        assert!(c as u64 >= n, "naive allocs {c} < n {n}");
    }

    // Wall-clock ratio: the reference implementation's 22-25x gap is
    // interpreter-specific; the
    // cross-language gate is >= 2x, ratio reported.
    let n = 100_000u64;
    let mut profile = EncoderProfile::from_preset(Preset::L4x4Minilm);
    profile.dims = 384;
    let enc = VirtualEncoder::new(profile, 0).unwrap();
    let key = PartitionKey("bench".into());
    let matrix = enc.encode_rows_untimed(&key, n, true).unwrap();
    let view = matrix.slice(0, n).unwrap();
    let lens: Vec<u32> = (0..n).map(|i| 30 + (i % 35) as u32).collect();
    let texts = TextsRef::ZeroFilled(&lens);
    let mut best_zero = f64::INFINITY;
    let mut best_naive = f64::INFINITY;
    for _ in 0..3 {
        let t = std::time::Instant::now();
        let a = serialize_zero_copy(&key, &texts, &view).unwrap();
        best_zero = best_zero.min(t.elapsed().as_secs_f64());
        let t = std::time::Instant::now();
        let b = serialize_naive(&key, &texts, &view).unwrap();
        best_naive = best_naive.min(t.elapsed().as_secs_f64());
        assert_eq!(a, b);
    }
    let ratio = best_naive / best_zero;
    assert!(ratio >= 2.0, "zero-copy speedup {ratio:.1}x < 2x");

    println!(
        "criterion 10 PASS: 1000 cases byte-identical; zero-copy allocs {zero_counts:?} (O(1)); naive allocs scale with n; speed ratio {ratio:.1}x (>=2x)"
    );
}

#[test]
fn criterion_11_resume_under_faults() {
    let wl = WorkloadConfig {
        partitions: 30,
        size_dist: LogNormalParams {
            mu_log: 5.2,
            sigma_log: 1.2,
        },
        min_size: 1,
        avg_text_len: 31,
        seed: SEED,
        text_mode: TextMode::Materialized,
        target_total: Some(6_000),
    };
    let thr = Thresholds::new(800, 4_000).unwrap();
    let mut cfg = RunConfig::new(
        wl.clone(),
        Strategy::SurgeAsync { thresholds: thr },
        Preset::L4x4Minilm,
        StorageProfile::gcs(),
    );
    cfg.profile.dims = 8;
    cfg.storage = cfg.storage.with_fault_rate(0.003).unwrap();
    let workload = generate_workload(&wl).unwrap();
    let n_max = workload.n_max();

    let read_all = |backend: &FsBackend| -> std::collections::BTreeMap<String, Vec<u8>> {
        backend
            .list("runs")
            .unwrap()
            .into_iter()
            .map(|p| (p.clone(), backend.read(&p).unwrap()))
            .collect()
    };

    let ref_dir = tempfile::tempdir().unwrap();
    let mut ref_backend = FsBackend::new(ref_dir.path()).unwrap();
    let reference = run_with(
        &cfg,
        RunEnv {
            backend: Some(&mut ref_backend),
            ..Default::default()
        },
    )
    .unwrap();
    let ref_files = read_all(&ref_backend);
    assert_eq!(ref_files.len(), 30);

    // Two crash points land just after a flush's encode completes, while its
    // uploads are still in flight (the re-encode case); two land at
    // arbitrary fractions of the wall.
    let mut encode_end = 0.0;
    let mut mid_flush_points = Vec::new();
    for r in reference.flushes.iter() {
        encode_end += r.t_call;
        if mid_flush_points.len() < 2 && r.index >= 1 {
            mid_flush_points.push(encode_end + 1e-4);
        }
    }
    let mut crash_points = mid_flush_points;
    crash_points.push(reference.metrics.wall * 0.55);
    crash_points.push(reference.metrics.wall * 0.92);

    let mut max_reencoded = 0u64;
    for (i, &crash_at) in crash_points.iter().enumerate() {
        let dir = tempfile::tempdir().unwrap();
        let mut backend = FsBackend::new(dir.path()).unwrap();
        let crashed = run_with(
            &cfg,
            RunEnv {
                backend: Some(&mut backend),
                crash_at: Some(crash_at),
                resume: false,
            },
        )
        .unwrap();
        let resumed = run_with(
            &cfg,
            RunEnv {
                backend: Some(&mut backend),
                crash_at: None,
                resume: true,
            },
        )
        .unwrap();
        let final_files = read_all(&backend);
        assert_eq!(final_files, ref_files, "crash point {i} diverged");
        let reencoded: u64 = resumed
            .encoded
            .intersection(&crashed.encoded)
            .map(|k| {
                workload
                    .partitions
                    .iter()
                    .find(|p| &p.key == k)
                    .unwrap()
                    .n_k
            })
            .sum();
        assert!(
            reencoded <= thr.b_min + n_max,
            "crash point {i}: re-encoded {reencoded} > B_min + n_max"
        );
        max_reencoded = max_reencoded.max(reencoded);
    }
    // The mid-flush points must actually exercise re-encoding, or the bound
    // above was vacuous.
    assert!(
        max_reencoded >= 1,
        "no crash point left an interrupted SuperBatch behind"
    );
    println!(
        "criterion 11 PASS: 4 crash points resumed to identical file sets; max re-encoded {max_reencoded} <= B_min+n_max = {}",
        thr.b_min + n_max
    );
}

#[test]
fn criterion_12_decision_table_exact() {
    let cells = [
        (0.6, 1.5, Verdict::StronglyRecommended),
        (0.7, 0.4, Verdict::Beneficial),
        (0.23, 4.37, Verdict::ModeratelyBeneficial),
        (0.1, 0.5, Verdict::Optional),
    ];
    for (phi, cv, expect) in cells {
        assert_eq!(
            recommend(phi, cv).unwrap().verdict,
            expect,
            "cell ({phi}, {cv})"
        );
    }
    // Boundary convention: exact 0.5 / 1.0 map to the "greater" rows.
    assert_eq!(
        recommend(0.5, 1.0).unwrap().verdict,
        Verdict::StronglyRecommended
    );
    assert_eq!(recommend(0.5, 0.999).unwrap().verdict, Verdict::Beneficial);
    assert_eq!(
        recommend(0.499, 1.0).unwrap().verdict,
        Verdict::ModeratelyBeneficial
    );
    assert_eq!(recommend(0.499, 0.999).unwrap().verdict, Verdict::Optional);
    println!("criterion 12 PASS: all 4 cells exact plus boundary convention");
}
