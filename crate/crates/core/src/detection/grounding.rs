//! Grounding of model-reported quotes in the source text.
//!
//! A quote is kept only if it occurs verbatim in the text once both sides are
//! whitespace-normalized. Matching is case-sensitive and exact; near misses
//! are dropped and left for human review.

use std::collections::HashMap;
use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::model::{Detection, DetectionSource, IdentifierCategory, TextSpan, TranscriptDocument};
use crate::text::{normalize_ws, NormalizedText};

/// Confidence used when the model does not report one.
pub const DEFAULT_LLM_CONFIDENCE: f64 = 0.8;

#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub quote: String,
    /// `None` when the reported subtype is not in the taxonomy.
    pub category: Option<IdentifierCategory>,
    pub confidence: Option<f64>,
    pub rationale: Option<String>,
}

impl Candidate {
    pub fn new(quote: impl Into<String>, category: IdentifierCategory) -> Self {
        Candidate {
            quote: quote.into(),
            category: Some(category),
            confidence: None,
            rationale: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DropReason {
    NotInSource,
    UnknownCategory,
    Unparseable,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DroppedItem {
    pub doc_id: String,
    pub quote: String,
    pub reason: DropReason,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
}

/// Ground candidates against every turn of `doc`.
pub fn filter_hallucinations(candidates: &[Candidate], doc: &TranscriptDocument) -> (Vec<Detection>, Vec<DroppedItem>) {
    filter_in_turns(candidates, doc, 0..doc.turns.len())
}

/// Ground candidates against a contiguous range of turns. Identical quotes
/// are placed at successive occurrences: each search starts after the end of
/// the previous grounded occurrence of the same quote.
pub fn filter_in_turns(
    candidates: &[Candidate],
    doc: &TranscriptDocument,
    turns: Range<usize>,
) -> (Vec<Detection>, Vec<DroppedItem>) {
    let turns = turns.start.min(doc.turns.len())..turns.end.min(doc.turns.len());
    let text = NormalizedText::from_segments(doc.turns[turns].iter().map(|t| (t.index, t.text.as_str())));
    let mut cursors: HashMap<Vec<char>, usize> = HashMap::new();
    let mut grounded = Vec::new();
    let mut dropped = Vec::new();

    for c in candidates {
        let drop = |reason| DroppedItem {
            doc_id: doc.doc_id.clone(),
            quote: c.quote.clone(),
            reason,
            detail: None,
        };
        let Some(category) = &c.category else {
            dropped.push(drop(DropReason::UnknownCategory));
            continue;
        };
        let needle: Vec<char> = normalize_ws(&c.quote).chars().collect();
        if needle.is_empty() {
            dropped.push(drop(DropReason::NotInSource));
            continue;
        }
        let cursor = cursors.get(&needle).copied().unwrap_or(0);
        let mut from = cursor;
        let mut located = None;
        while let Some(pos) = text.find_from(&needle, from) {
            if let Some(range) = text.source_range(pos, pos + needle.len()) {
                located = Some((pos, range));
                break;
            }
            from = pos + 1;
        }
        let Some((pos, (turn, start, end))) = located else {
            dropped.push(drop(DropReason::NotInSource));
            continue;
        };
        cursors.insert(needle.clone(), pos + needle.len());
        let surface = doc
            .slice(turn, start, end)
            .expect("normalized positions map into the turn")
            .to_string();
        let span = TextSpan {
            doc_id: doc.doc_id.clone(),
            turn_index: turn,
            start,
            end,
            surface,
        };
        let mut d = Detection::new(span, category.clone(), DetectionSource::Llm);
        d.confidence = c
            .confidence
            .filter(|x| (0.0..=1.0).contains(x))
            .unwrap_or(DEFAULT_LLM_CONFIDENCE);
        d.rationale = c.rationale.clone();
        grounded.push(d);
    }
    (grounded, dropped)
}
