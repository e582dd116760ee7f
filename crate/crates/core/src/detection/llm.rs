//! Model-assisted span extraction.
//!
//! Documents are cut into chunks on turn boundaries, each chunk is sent with
//! an extraction prompt asking for a JSON array of
//! `{quote, group, subtype}` objects, and every returned quote is grounded
//! against the chunk before it becomes a detection.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use super::grounding::{filter_in_turns, Candidate, DropReason, DroppedItem};
use crate::llm::{LlmClient, LlmError};
use crate::model::{Detection, IdentifierGroup, TranscriptDocument};
use crate::taxonomy::Taxonomy;

pub const DEFAULT_MAX_CHARS: usize = 4000;

const DEFAULT_PROMPT: &str = "\
You help de-identify research interview transcripts.
Find every span in the text below that could reveal who a speaker or a mentioned person is, \
either alone or together with other details. Copy each span exactly as written.
Reply with a JSON array and nothing else. Each element must be an object with the keys \
\"quote\", \"group\" and \"subtype\", chosen from this list (group: subtypes):
{categories}

Text:
{text}
";

/// Extraction prompt with `{categories}` and `{text}` placeholders.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PromptTemplate(pub String);

impl Default for PromptTemplate {
    fn default() -> Self {
        PromptTemplate(DEFAULT_PROMPT.to_string())
    }
}

impl PromptTemplate {
    pub fn render(&self, taxonomy: &Taxonomy, text: &str) -> String {
        let categories = IdentifierGroup::ALL
            .iter()
            .map(|g| format!("- {}: {}", g, taxonomy.subtypes_of(*g).collect::<Vec<_>>().join(", ")))
            .collect::<Vec<_>>()
            .join("\n");
        self.0.replace("{categories}", &categories).replace("{text}", text)
    }
}

/// One element of the model's reply.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LlmItem {
    pub quote: String,
    #[serde(default)]
    pub group: String,
    pub subtype: String,
    #[serde(default)]
    pub confidence: Option<f64>,
    #[serde(default)]
    pub rationale: Option<String>,
}

/// Parsed reply: usable items plus a count of elements that did not fit the
/// item shape.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LlmDetectionResponse {
    pub items: Vec<LlmItem>,
    pub unparseable: Vec<String>,
}

/// Parse a reply as a JSON array. If the whole reply is not an array, one
/// salvage pass parses the outermost `[...]` substring.
pub fn parse_response(reply: &str) -> Result<LlmDetectionResponse, LlmError> {
    let trimmed = reply.trim();
    let array = match serde_json::from_str::<serde_json::Value>(trimmed) {
        Ok(serde_json::Value::Array(a)) => a,
        _ => {
            let (Some(open), Some(close)) = (trimmed.find('['), trimmed.rfind(']')) else {
                return Err(LlmError::Protocol(format!("reply has no JSON array: {}", preview(trimmed))));
            };
            if close < open {
                return Err(LlmError::Protocol(format!("reply has no JSON array: {}", preview(trimmed))));
            }
            match serde_json::from_str::<serde_json::Value>(&trimmed[open..=close]) {
                Ok(serde_json::Value::Array(a)) => a,
                _ => return Err(LlmError::Protocol(format!("unsalvageable reply: {}", preview(trimmed)))),
            }
        }
    };
    let mut out = LlmDetectionResponse::default();
    for v in array {
        match serde_json::from_value::<LlmItem>(v.clone()) {
            Ok(item) => out.items.push(item),
            Err(_) => out.unparseable.push(v.to_string()),
        }
    }
    Ok(out)
}

fn preview(s: &str) -> String {
    s.chars().take(80).collect()
}

/// Split turns into consecutive chunks of at most `max_chars` characters
/// (turns joined by one newline). A single oversized turn forms its own chunk.
pub fn chunk_turns(doc: &TranscriptDocument, max_chars: usize) -> Vec<Range<usize>> {
    let mut chunks = Vec::new();
    let mut start = 0;
    let mut size = 0;
    for (i, t) in doc.turns.iter().enumerate() {
        let len = t.text.chars().count();
        let added = if i == start { len } else { size + 1 + len };
        if i > start && added > max_chars {
            chunks.push(start..i);
            start = i;
            size = len;
        } else {
            size = added;
        }
    }
    if start < doc.turns.len() {
        chunks.push(start..doc.turns.len());
    }
    chunks
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct LlmDetectionOutput {
    pub detections: Vec<Detection>,
    pub dropped: Vec<DroppedItem>,
    pub requests: usize,
}

pub fn detect_llm(
    doc: &TranscriptDocument,
    client: &dyn LlmClient,
    prompt: &PromptTemplate,
    max_chars: usize,
    taxonomy: &Taxonomy,
) -> Result<LlmDetectionOutput, LlmError> {
    let mut out = LlmDetectionOutput::default();
    for range in chunk_turns(doc, max_chars) {
        let text = doc.turns[range.clone()]
            .iter()
            .map(|t| t.text.as_str())
            .collect::<Vec<_>>()
            .join("\n");
        if text.trim().is_empty() {
            continue;
        }
        let reply = client.complete(&prompt.render(taxonomy, &text))?;
        out.requests += 1;
        let parsed = parse_response(&reply)?;
        for raw in parsed.unparseable {
            out.dropped.push(DroppedItem {
                doc_id: doc.doc_id.clone(),
                quote: String::new(),
                reason: DropReason::Unparseable,
                detail: Some(raw),
            });
        }
        let candidates: Vec<Candidate> = parsed
            .items
            .into_iter()
            .map(|item| Candidate {
                category: taxonomy.category(item.subtype.trim()).ok(),
                quote: item.quote,
                confidence: item.confidence,
                rationale: item.rationale,
            })
            .collect();
        let (grounded, dropped) = filter_in_turns(&candidates, doc, range);
        out.detections.extend(grounded);
        out.dropped.extend(dropped);
    }
    Ok(out)
}
