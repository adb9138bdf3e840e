//! Doc-test shims for the mdbook guide: every fenced Rust block in the
//! book chapters compiles and runs under `cargo test --doc`, keeping the
//! narrative examples in sync with the crate.

#[doc = include_str!("../../../book/src/cost-model.md")]
pub struct CostModelChapter;

#[doc = include_str!("../../../book/src/aggregation.md")]
pub struct AggregationChapter;

#[doc = include_str!("../../../book/src/pipeline.md")]
pub struct PipelineChapter;

#[doc = include_str!("../../../book/src/file-format.md")]
pub struct FileFormatChapter;

#[doc = include_str!("../../../book/src/storage-and-resume.md")]
pub struct StorageChapter;

#[doc = include_str!("../../../book/src/decision-guide.md")]
pub struct DecisionGuideChapter;
