//! Corpus construction and evaluation toolkit for multi-turn medical
//! dialogue: ingest public datasets, clean crawl noise with regex rules,
//! polish doctor suggestions through an LLM, serialize fine-tuning samples,
//! and score model output with BLEU, ROUGE and PQA.

pub mod cleaner;
pub mod corpus;
mod error;
pub mod metrics;
pub mod parallel;
pub mod polisher;
pub mod serializer;

pub use error::{Error, Result};
pub mod pipeline;
pub mod stub;
pub mod synth;
