//! Document parsing orchestration.
//!
//! Layout proposals are filtered and put into reading order, page crops are
//! batched through a recognizer service, and the results are assembled into
//! Markdown and JSON. The [`metrics`] module scores recognizer output.

pub mod assemble;
pub mod batching;
pub mod config;
pub mod domain;
pub mod imaging;
pub mod layout;
pub mod metrics;
pub mod mock;
pub mod otsl;
pub mod pipeline;
pub mod reading_order;
pub mod recognizer;

pub use assemble::{assemble_json, assemble_markdown, Document, SCHEMA_VERSION};
pub use domain::{BBox, Category, LayoutElement};
pub use pipeline::{run_pipeline, Pipeline, PipelineConfig, PipelineError};
