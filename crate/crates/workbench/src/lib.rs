//! Storage, ingestion, HTTP and command-line layers of the annotation
//! workbench. Domain logic lives in `workbench_core`.

pub mod cli;
pub mod error;
pub mod formats;
pub mod http;
pub mod ingest;
pub mod store;

pub use error::{Result, WorkbenchError};
pub use store::AnnotationStore;
