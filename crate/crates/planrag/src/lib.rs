//! planrag: plan-guided retrieval for grounded long-form generation,
//! with an attribution evaluation harness.
//!
//! The library implements four generation strategies over pluggable
//! backends (no retrieval, one retrieval round, and two plan-based
//! variants that turn a paragraph outline into search questions), plus
//! the metrics used to compare them: strict/macro/micro AIS, ROUGE
//! precision against the evidence, output length, and n-gram
//! uniqueness.
//!
//! Everything runs offline against deterministic backends and a
//! synthetic document world, so experiments are reproducible down to
//! the byte; live HTTP backends plug into the same traits. See the
//! `book/` guide for a walkthrough and `planrag demo` for an immediate
//! end-to-end run.

pub mod backends;
pub mod corpus;
pub mod experiment;
pub mod metrics;
pub mod pipeline;
pub mod textproc;

pub use backends::{Backends, SamplingParams, ScoredAnswer, Snippet};
pub use metrics::{ais_aggregate, AisScores, AttributionConfig, MetricReport};
pub use pipeline::{
    EntityKind, EntityQuery, EvidencePool, Pipeline, PipelineConfig, RunRecord, StrategyVariant,
};

// The book's code blocks double as doctests; each chapter compiles and
// runs under `cargo test --doc`.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/strategies.md")]
    mod strategies {}
    #[doc = include_str!("../../../book/src/planning.md")]
    mod planning {}
    #[doc = include_str!("../../../book/src/metrics.md")]
    mod metrics {}
    #[doc = include_str!("../../../book/src/backends.md")]
    mod backends {}
    #[doc = include_str!("../../../book/src/synthetic-world.md")]
    mod synthetic_world {}
    #[doc = include_str!("../../../book/src/experiments.md")]
    mod experiments {}
}
