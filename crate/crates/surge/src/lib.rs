//! Partition-aware streaming batch aggregation for GPU embedding pipelines,
//! plus a virtual-time pipeline simulator that reproduces the system's cost
//! model, memory bounds, and baseline comparisons without a GPU.
//!
//! The crate is organized around the pipeline stages:
//!
//! - [`workload`]: synthetic log-normal partitioned workloads, streamed in
//!   partition-key order.
//! - [`costmodel`]: closed-form throughput, threshold, overlap, memory, and
//!   fill-ratio formulas, usable standalone or as the simulator's oracle.
//! - [`aggregator`]: the two-threshold SuperBatch accumulator.
//! - [`encoder`]: a cost-model-driven virtual encoder producing
//!   deterministic L2-normalized embeddings.
//! - [`columnar`]: the `.srgb` partition file format with byte-identical
//!   zero-copy and naive serialization paths.
//! - [`storage`]: latency-profiled backends, the retrying upload pool, and
//!   resume scanning.
//! - [`runner`]: the virtual-clock engine executing the five batching
//!   strategies end to end, with crash/resume support.
//! - [`telemetry`]: per-flush records, run metrics, peak-memory tracking.
//!
//! See the `book/` guide for a narrative walk-through of the concepts.

#![forbid(unsafe_code)]

pub mod aggregator;
pub mod columnar;
pub mod costmodel;
pub mod encoder;
mod error;
pub mod runner;
pub mod storage;
pub mod telemetry;
pub mod workload;

pub use error::{Error, FormatError, Result};

#[cfg(doctest)]
mod book;
