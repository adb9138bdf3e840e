//! Minimal end-to-end tour: predict, simulate, compare.
//!
//! Run with: cargo run --example quickstart

use surge::aggregator::Thresholds;
use surge::costmodel::{predict_speedup, predicted_flushes, Preset};
use surge::runner::{run, RunConfig, Strategy};
use surge::storage::StorageProfile;
use surge::workload::WorkloadConfig;

fn main() -> surge::Result<()> {
    let n = 10_000_000;
    let p = 4_000;
    let preset = Preset::L4x4Minilm;

    // What the cost model expects.
    let pred = predict_speedup(n, p as u64, predicted_flushes(n, 100_000), &preset.cost())?;
    println!(
        "predicted: alpha={:.3} speedup={:.2}x (pbp {:.1}s -> batched {:.1}s)",
        pred.alpha, pred.speedup, pred.t_pbp, pred.t_batched
    );

    // What the simulator measures.
    let workload = WorkloadConfig::benchmark(p, n, 1.72, 5);
    for strategy in [
        Strategy::Pbp,
        Strategy::Fsb { batch: 100_000 },
        Strategy::SurgeSync {
            thresholds: Thresholds::DEFAULT,
        },
        Strategy::SurgeAsync {
            thresholds: Thresholds::DEFAULT,
        },
        Strategy::PbPbpLb { batch: 100_000 },
    ] {
        let cfg = RunConfig::new(workload.clone(), strategy, preset, StorageProfile::gcs());
        let out = run(&cfg)?;
        let m = &out.metrics;
        println!(
            "{:>11}: {:>6.0} texts/s  wall {:>6.1}s  ttfo {:>6.1}s  peak {:>6.2} GB  calls {:>4}",
            m.strategy,
            m.throughput,
            m.wall,
            m.ttfo,
            m.peak_data_mem as f64 / 1e9,
            m.encode_calls,
        );
    }
    Ok(())
}
