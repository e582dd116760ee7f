//! Detection, risk classification and adaptive anonymization of qualitative
//! interview transcripts, with evaluation against reference annotations.
//!
//! The pipeline runs in three steps. [`detection`] finds candidate spans with
//! regular expressions, gazetteers and a local language model;
//! [`classification`] assigns each a risk class; [`anonymization`] picks a
//! strategy per detection and rewrites the text. [`evaluation`] scores
//! detections and measures how much the anonymized text drifted.

pub mod anonymization;
pub mod classification;
pub mod detection;
pub mod error;
pub mod evaluation;
pub mod gencorpus;
pub mod ingestion;
pub mod io;
pub mod llm;
pub mod model;
pub mod pipeline;
pub mod taxonomy;
pub mod text;

pub use error::{Error, ErrorFamily, Result};
