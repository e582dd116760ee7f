//! Full, partial and conditional suppression.

use std::collections::{BTreeMap, BTreeSet};

use regex::Regex;

use crate::model::{Detection, TranscriptDocument};
use crate::text::normalize_key;

pub const REDACTED: &str = "[Redacted]";

/// Document frequency of every detected surface, computed over the whole
/// corpus before planning.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CorpusStats {
    doc_frequency: BTreeMap<String, usize>,
}

impl CorpusStats {
    /// Count, for each distinct normalized detection surface, the documents
    /// whose text contains it (case-insensitive, whitespace-normalized).
    pub fn compute(corpus: &[TranscriptDocument], detections: &[Detection]) -> Self {
        let surfaces: BTreeSet<String> = detections
            .iter()
            .map(|d| normalize_key(&d.span.surface))
            .filter(|s| !s.is_empty())
            .collect();
        let texts: Vec<String> = corpus
            .iter()
            .map(|doc| {
                doc.turns
                    .iter()
                    .map(|t| normalize_key(&t.text))
                    .collect::<Vec<_>>()
                    .join("\n")
            })
            .collect();
        let doc_frequency = surfaces
            .into_iter()
            .map(|s| {
                let n = texts.iter().filter(|t| t.contains(&s)).count();
                (s, n)
            })
            .collect();
        CorpusStats { doc_frequency }
    }

    pub fn doc_frequency(&self, surface: &str) -> usize {
        self.doc_frequency.get(&normalize_key(surface)).copied().unwrap_or(0)
    }
}

/// Keep the first match of `keep` and redact the rest of the surface, e.g.
/// the domain of an email survives as `[Redacted]@example.org`. Returns
/// `None` when the pattern does not match or would keep everything.
pub fn suppress_partial(surface: &str, keep: &Regex) -> Option<String> {
    let m = keep.find(surface)?;
    if m.start() == 0 && m.end() == surface.len() {
        return None;
    }
    let mut out = String::new();
    if m.start() > 0 {
        out.push_str(REDACTED);
    }
    out.push_str(m.as_str());
    if m.end() < surface.len() {
        out.push_str(REDACTED);
    }
    Some(out)
}

/// Conditional suppression fires only for rare surfaces: those found in fewer
/// than `k` documents.
pub fn conditional_applies(surface: &str, k: usize, stats: &CorpusStats) -> bool {
    stats.doc_frequency(surface) < k
}
