//! Candidate detection: rules, gazetteers and model extraction, followed by
//! hallucination filtering and merging.

pub mod dictionary;
pub mod grounding;
pub mod llm;
pub mod merge;
pub mod rules;
pub mod tags;

pub use dictionary::{detect_dictionary, CompiledGazetteer, Gazetteer, GazetteerEntry, MatchMode};
pub use grounding::{filter_hallucinations, Candidate, DropReason, DroppedItem};
pub use llm::{detect_llm, parse_response, LlmDetectionOutput, LlmDetectionResponse, LlmItem, PromptTemplate};
pub use merge::merge_detections;
pub use rules::{detect_rules, CompiledRules, RulePack, RuleSpec};
pub use tags::summarize_tags;
