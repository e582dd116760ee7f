//! Gazetteer (dictionary) lookup for names, organizations and places.

use std::collections::BTreeMap;

use regex::{Regex, RegexBuilder};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Detection, DetectionSource, TextSpan, TranscriptDocument};
use crate::taxonomy::Taxonomy;
use crate::text::CharIndex;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MatchMode {
    #[default]
    ExactWord,
    CaseInsensitiveWord,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GazetteerEntry {
    /// Bare string: exact-word match.
    Plain(String),
    Detailed {
        surface: String,
        #[serde(default)]
        mode: MatchMode,
    },
}

impl GazetteerEntry {
    pub fn surface(&self) -> &str {
        match self {
            GazetteerEntry::Plain(s) => s,
            GazetteerEntry::Detailed { surface, .. } => surface,
        }
    }

    pub fn mode(&self) -> MatchMode {
        match self {
            GazetteerEntry::Plain(_) => MatchMode::ExactWord,
            GazetteerEntry::Detailed { mode, .. } => *mode,
        }
    }
}

/// subtype → known surface forms.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Gazetteer(pub BTreeMap<String, Vec<GazetteerEntry>>);

impl Gazetteer {
    pub fn insert(&mut self, subtype: &str, entry: GazetteerEntry) {
        self.0.entry(subtype.to_string()).or_default().push(entry);
    }

    /// Merge another gazetteer's entries into this one.
    pub fn extend(&mut self, other: Gazetteer) {
        for (k, v) in other.0 {
            self.0.entry(k).or_default().extend(v);
        }
    }

    pub fn compile(&self, taxonomy: &Taxonomy) -> Result<CompiledGazetteer> {
        let mut entries = Vec::new();
        for (subtype, list) in &self.0 {
            let category = taxonomy.category(subtype)?;
            for e in list {
                let surface = e.surface();
                if surface.trim().is_empty() {
                    return Err(Error::Config(format!("empty gazetteer entry for {subtype}")));
                }
                let re = RegexBuilder::new(&word_pattern(surface))
                    .case_insensitive(e.mode() == MatchMode::CaseInsensitiveWord)
                    .build()
                    .map_err(|err| Error::Config(format!("gazetteer entry {surface:?}: {err}")))?;
                entries.push((category.clone(), re));
            }
        }
        Ok(CompiledGazetteer { entries })
    }
}

/// Word boundaries are only asserted on edges that are word characters.
fn word_pattern(surface: &str) -> String {
    let is_word = |c: char| c.is_alphanumeric() || c == '_';
    let lead = surface.chars().next().is_some_and(is_word);
    let trail = surface.chars().last().is_some_and(is_word);
    format!(
        "{}{}{}",
        if lead { r"\b" } else { "" },
        regex::escape(surface),
        if trail { r"\b" } else { "" }
    )
}

#[derive(Debug, Clone, Default)]
pub struct CompiledGazetteer {
    entries: Vec<(crate::model::IdentifierCategory, Regex)>,
}

pub fn detect_dictionary(doc: &TranscriptDocument, gaz: &CompiledGazetteer) -> Vec<Detection> {
    let mut out = Vec::new();
    for turn in &doc.turns {
        let idx = CharIndex::new(&turn.text);
        for (category, re) in &gaz.entries {
            for m in re.find_iter(&turn.text) {
                let (Some(start), Some(end)) = (idx.char_of(m.start()), idx.char_of(m.end())) else {
                    continue;
                };
                let span = TextSpan {
                    doc_id: doc.doc_id.clone(),
                    turn_index: turn.index,
                    start,
                    end,
                    surface: m.as_str().to_string(),
                };
                let mut d = Detection::new(span, category.clone(), DetectionSource::Dictionary);
                d.rationale = Some(format!("gazetteer:{}", category.subtype));
                out.push(d);
            }
        }
    }
    // the same span can be listed under two entries; keep the first
    out.sort_by(|a, b| {
        (a.span.turn_index, a.span.start, a.span.end).cmp(&(b.span.turn_index, b.span.start, b.span.end))
    });
    out.dedup_by(|a, b| a.detection_id == b.detection_id);
    out
}
