//! Mining, curation and evaluation toolkit for OpenACC pragma-loop datasets.

pub mod curate;
pub mod dataset;
pub mod extract;
pub mod ingest;
pub mod mcu;
pub mod metrics;
pub mod pipeline;
pub mod pragma;
pub mod report;
pub mod syntax;
pub mod taxonomy;
