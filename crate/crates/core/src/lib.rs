//! Core logic of the tweet annotation workbench.
//!
//! Everything in this crate is pure computation over in-memory values and
//! only needs `alloc`: keyword matching for archive queries, stratified
//! sampling plans and draws, the antisemitism codebook and its assistive
//! scanner, annotation record validation, and the summary statistics
//! (margin of error, category proportions, inter-annotator agreement,
//! daily timelines). File formats, persistence and the HTTP service live in
//! the `workbench` crate.
#![no_std]
#![warn(missing_debug_implementations)]

extern crate alloc;

pub mod analytics;
pub mod annotation;
pub mod codebook;
pub mod corpus;
pub mod query;
pub mod sampler;
mod text;

pub use annotation::{AnnotationRecord, AnnotationSubmission, Scale};
pub use codebook::{Category, Codebook, CodebookEntry, CodebookHit};
pub use corpus::{CorpusStats, Liveness, TweetId, TweetRecord};
pub use query::{MatchMode, MatchResult, Matcher, QuerySpec};
pub use sampler::{SampleDraw, SamplePlan, StratumSpec};

/// Version stamped into every document the workbench writes.
pub const SCHEMA_VERSION: u32 = 1;

pub(crate) fn schema_version() -> u32 {
    SCHEMA_VERSION
}
