//! Transcript parsing, metadata scrubbing and gold-annotation loading.
//!
//! Three input formats are accepted:
//!
//! - `PlainTextTurns`: `Speaker: text` lines. A speaker line starts a new
//!   turn, blank lines close the current turn, and a line without a colon in
//!   its first 40 characters continues the previous turn (joined by one space).
//! - `JsonLinesTurns`: one `{"speaker": "...", "text": "..."}` object per line.
//! - `RawText`: the whole input is a single participant turn.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io;
use crate::model::{
    Detection, DetectionSource, GoldAnnotationSet, GoldDocument, IdentifierCategory, IdentifierGroup,
    SpeakerRole, TextSpan, TranscriptDocument,
};

static SPEAKER_LINE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^(?<speaker>[^:\n]{1,40}):\s?(?<text>.*)$").expect("speaker grammar"));

const DEFAULT_METADATA_KEYS: &str = include_str!("../data/metadata_keys.json");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum IngestFormat {
    PlainTextTurns,
    JsonLinesTurns,
    RawText,
}

impl IngestFormat {
    /// Guess from a file extension: `.txt` → plain turns, `.jsonl` → JSON
    /// lines, anything else → raw text.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref() {
            Some("txt") => IngestFormat::PlainTextTurns,
            Some("jsonl") => IngestFormat::JsonLinesTurns,
            _ => IngestFormat::RawText,
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_lowercase().as_str() {
            "plain" | "plaintextturns" | "txt" => Some(IngestFormat::PlainTextTurns),
            "jsonl" | "jsonlinesturns" => Some(IngestFormat::JsonLinesTurns),
            "raw" | "rawtext" => Some(IngestFormat::RawText),
            _ => None,
        }
    }
}

/// Speaker label → role table. Lookup is case-insensitive.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpeakerAliases {
    pub interviewer: Vec<String>,
    pub participant: Vec<String>,
}

impl Default for SpeakerAliases {
    fn default() -> Self {
        SpeakerAliases {
            interviewer: ["I", "Interviewer", "Q"].map(String::from).to_vec(),
            participant: ["P", "Participant", "R", "A"].map(String::from).to_vec(),
        }
    }
}

impl SpeakerAliases {
    pub fn role_of(&self, label: &str) -> SpeakerRole {
        let label = label.trim();
        if self.interviewer.iter().any(|a| a.eq_ignore_ascii_case(label)) {
            SpeakerRole::Interviewer
        } else if self.participant.iter().any(|a| a.eq_ignore_ascii_case(label)) {
            SpeakerRole::Participant
        } else {
            SpeakerRole::Other(label.to_string())
        }
    }

    fn label_of<'a>(&'a self, role: &'a SpeakerRole) -> &'a str {
        match role {
            SpeakerRole::Interviewer => self.interviewer.first().map(String::as_str).unwrap_or("I"),
            SpeakerRole::Participant => self.participant.first().map(String::as_str).unwrap_or("P"),
            SpeakerRole::Other(l) => l,
        }
    }
}

#[derive(Serialize, Deserialize)]
struct JsonTurn {
    speaker: String,
    text: String,
}

fn decode(raw: &[u8]) -> Result<&str> {
    let raw = raw.strip_prefix(b"\xEF\xBB\xBF").unwrap_or(raw);
    std::str::from_utf8(raw).map_err(|e| Error::Encoding(e.to_string()))
}

pub fn parse_transcript(
    raw: &[u8],
    format: IngestFormat,
    doc_id: &str,
    aliases: &SpeakerAliases,
) -> Result<TranscriptDocument> {
    let text = decode(raw)?;
    let mut doc = TranscriptDocument::new(doc_id);
    match format {
        IngestFormat::PlainTextTurns => {
            // `open` is true while the last turn may still take continuation lines
            let mut open = false;
            for (i, line) in text.lines().enumerate() {
                let line = line.strip_suffix('\r').unwrap_or(line);
                if line.trim().is_empty() {
                    open = false;
                    continue;
                }
                if let Some(caps) = SPEAKER_LINE.captures(line) {
                    doc.push_turn(aliases.role_of(&caps["speaker"]), &caps["text"]);
                    open = true;
                } else if open {
                    let turn = doc.turns.last_mut().expect("open implies a turn");
                    turn.text.push(' ');
                    turn.text.push_str(line.trim());
                } else {
                    return Err(Error::MalformedInput {
                        line: i + 1,
                        message: "line has no speaker label and does not continue a turn".into(),
                    });
                }
            }
        }
        IngestFormat::JsonLinesTurns => {
            for (i, line) in text.lines().enumerate() {
                if line.trim().is_empty() {
                    continue;
                }
                let t: JsonTurn = serde_json::from_str(line).map_err(|e| Error::MalformedInput {
                    line: i + 1,
                    message: e.to_string(),
                })?;
                doc.push_turn(aliases.role_of(&t.speaker), t.text);
            }
        }
        IngestFormat::RawText => {
            let body = text.trim_end_matches(['\n', '\r']);
            if !body.trim().is_empty() {
                doc.push_turn(SpeakerRole::Participant, body);
            }
        }
    }
    Ok(doc)
}

/// Render a document back into an ingest format. Parsing the result yields
/// the same turns.
pub fn serialize_transcript(doc: &TranscriptDocument, format: IngestFormat, aliases: &SpeakerAliases) -> String {
    match format {
        IngestFormat::PlainTextTurns => doc
            .turns
            .iter()
            .map(|t| format!("{}: {}\n", aliases.label_of(&t.speaker_role), t.text))
            .collect::<Vec<_>>()
            .join("\n"),
        IngestFormat::JsonLinesTurns => doc
            .turns
            .iter()
            .map(|t| {
                let jt = JsonTurn {
                    speaker: aliases.label_of(&t.speaker_role).to_string(),
                    text: t.text.clone(),
                };
                serde_json::to_string(&jt).expect("string fields serialize") + "\n"
            })
            .collect(),
        IngestFormat::RawText => doc.turns.iter().map(|t| t.text.as_str()).collect::<Vec<_>>().join("\n"),
    }
}

/// Metadata keys treated as hidden identifiers.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SensitiveKeys(pub Vec<String>);

impl Default for SensitiveKeys {
    fn default() -> Self {
        SensitiveKeys(serde_json::from_str(DEFAULT_METADATA_KEYS).expect("shipped key list parses"))
    }
}

fn canonical_key(k: &str) -> String {
    k.trim().to_lowercase().replace(['_', ' '], "-")
}

impl SensitiveKeys {
    /// A key matches when its canonical form (lowercase, `_`/space → `-`)
    /// contains a configured pattern.
    pub fn matches(&self, key: &str) -> bool {
        let key = canonical_key(key);
        self.0.iter().any(|p| key.contains(&canonical_key(p)))
    }
}

/// Remove sensitive metadata entries and report each removed value as a
/// `MetadataHidden` detection with a zero-length sentinel span.
pub fn scrub_metadata(doc: &TranscriptDocument, keys: &SensitiveKeys) -> (TranscriptDocument, Vec<Detection>) {
    let mut out = doc.clone();
    let mut detections = Vec::new();
    out.metadata = BTreeMap::new();
    for (k, v) in &doc.metadata {
        if !keys.matches(k) {
            out.metadata.insert(k.clone(), v.clone());
            continue;
        }
        if v.is_empty() {
            continue;
        }
        let span = TextSpan {
            doc_id: doc.doc_id.clone(),
            turn_index: 0,
            start: 0,
            end: 0,
            surface: v.clone(),
        };
        let mut d = Detection::new(
            span,
            IdentifierCategory::new(IdentifierGroup::MetadataHidden, "file-metadata-key"),
            DetectionSource::Rule,
        );
        d.detection_id = format!("{}:meta:{}", doc.doc_id, k);
        d.rationale = Some(format!("metadata:{k}"));
        detections.push(d);
    }
    (out, detections)
}

/// Parse and validate a newline-delimited corpus.
pub fn parse_corpus(text: &str) -> Result<Vec<TranscriptDocument>> {
    let docs: Vec<TranscriptDocument> = io::parse_jsonl(text)?;
    let mut seen = BTreeSet::new();
    for d in &docs {
        d.validate()?;
        if !seen.insert(d.doc_id.as_str()) {
            return Err(Error::MalformedInput {
                line: 0,
                message: format!("duplicate doc_id {}", d.doc_id),
            });
        }
    }
    Ok(docs)
}

pub fn read_corpus(path: &Path) -> Result<Vec<TranscriptDocument>> {
    parse_corpus(&io::read_to_string(path)?)
}

/// Parse gold annotations (one JSON object per document) and validate every
/// span against the corpus.
pub fn parse_gold(text: &str, corpus: &[TranscriptDocument]) -> Result<GoldAnnotationSet> {
    let by_id: BTreeMap<&str, &TranscriptDocument> = corpus.iter().map(|d| (d.doc_id.as_str(), d)).collect();
    let mut set = GoldAnnotationSet::default();
    for gd in io::parse_jsonl::<GoldDocument>(text)? {
        let doc = by_id
            .get(gd.doc_id.as_str())
            .ok_or_else(|| Error::NotFound(format!("gold document {} is not in the corpus", gd.doc_id)))?;
        let mut anns = gd.annotations;
        for a in &mut anns {
            a.span.doc_id = gd.doc_id.clone();
            let found = doc.slice(a.span.turn_index, a.span.start, a.span.end);
            if a.span.start >= a.span.end || found != Some(a.span.surface.as_str()) {
                return Err(Error::SpanMismatch {
                    doc_id: gd.doc_id.clone(),
                    turn: a.span.turn_index,
                    start: a.span.start,
                    end: a.span.end,
                    expected: a.span.surface.clone(),
                    found: found.unwrap_or_default().to_string(),
                });
            }
        }
        anns.sort_by_key(|a| (a.span.turn_index, a.span.start, a.span.end));
        for w in anns.windows(2) {
            if w[0].span.overlaps(&w[1].span) {
                return Err(Error::Overlap {
                    doc_id: gd.doc_id.clone(),
                    turn: w[0].span.turn_index,
                    a_start: w[0].span.start,
                    a_end: w[0].span.end,
                    b_start: w[1].span.start,
                    b_end: w[1].span.end,
                });
            }
        }
        set.docs.entry(gd.doc_id).or_default().extend(anns);
    }
    Ok(set)
}

pub fn load_gold(path: &Path, corpus: &[TranscriptDocument]) -> Result<GoldAnnotationSet> {
    parse_gold(&io::read_to_string(path)?, corpus)
}
