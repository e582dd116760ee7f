#![allow(dead_code)]

use sfaa_core::model::{Detection, DetectionSource, SpeakerRole, TextSpan, TranscriptDocument};
use sfaa_core::taxonomy::Taxonomy;
use sfaa_core::text::slice_chars;

pub fn doc(id: &str, turns: &[&str]) -> TranscriptDocument {
    let mut d = TranscriptDocument::new(id);
    for t in turns {
        d.push_turn(SpeakerRole::Participant, *t);
    }
    d
}

/// Detection over `[start, end)` of a turn, surface sliced from the text.
pub fn det(doc: &TranscriptDocument, turn: usize, start: usize, end: usize, subtype: &str, source: DetectionSource) -> Detection {
    let surface = slice_chars(&doc.turns[turn].text, start, end).expect("span in range").to_string();
    let span = TextSpan {
        doc_id: doc.doc_id.clone(),
        turn_index: turn,
        start,
        end,
        surface,
    };
    let category = Taxonomy::default().category(subtype).expect("shipped subtype");
    Detection::new(span, category, source)
}

/// Character offsets of the first occurrence of `needle` in a turn.
pub fn locate(doc: &TranscriptDocument, turn: usize, needle: &str) -> (usize, usize) {
    let text = &doc.turns[turn].text;
    let byte = text.find(needle).unwrap_or_else(|| panic!("{needle:?} not in turn {turn}"));
    let start = text[..byte].chars().count();
    (start, start + needle.chars().count())
}
