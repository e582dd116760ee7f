//! How far anonymization moved the text: word counts, frequent terms and
//! turn-level sentiment.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io;
use crate::model::TranscriptDocument;

const DEFAULT_LEXICON: &str = include_str!("../../data/sentiment_lexicon.json");
const DEFAULT_STOPWORDS: &str = include_str!("../../data/stopwords.txt");

pub const DEFAULT_TOP_K: usize = 50;

/// Word polarities in {-1, 0, +1}; unknown words score 0.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SentimentLexicon(pub BTreeMap<String, i8>);

impl Default for SentimentLexicon {
    fn default() -> Self {
        SentimentLexicon::from_json(DEFAULT_LEXICON).expect("shipped lexicon parses")
    }
}

impl SentimentLexicon {
    pub fn from_json(s: &str) -> Result<Self> {
        let raw: BTreeMap<String, i8> = serde_json::from_str(s).map_err(|e| Error::Config(format!("lexicon: {e}")))?;
        if let Some((w, p)) = raw.iter().find(|(_, p)| !(-1..=1).contains(*p)) {
            return Err(Error::Config(format!("lexicon polarity for {w:?} is {p}, expected -1, 0 or 1")));
        }
        Ok(SentimentLexicon(raw.into_iter().map(|(k, v)| (k.to_lowercase(), v)).collect()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        SentimentLexicon::from_json(&io::read_to_string(path)?)
    }

    pub fn polarity(&self, word: &str) -> i8 {
        self.0.get(word).copied().unwrap_or(0)
    }

    /// Sign of the summed word polarities: -1, 0 or +1.
    pub fn sign(&self, text: &str) -> i8 {
        terms(text).map(|w| self.polarity(&w) as i64).sum::<i64>().signum() as i8
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Stopwords(pub HashSet<String>);

impl Default for Stopwords {
    fn default() -> Self {
        Stopwords::parse(DEFAULT_STOPWORDS)
    }
}

impl Stopwords {
    /// Whitespace-separated words; `#` starts a comment line.
    pub fn parse(s: &str) -> Self {
        Stopwords(
            s.lines()
                .filter(|l| !l.trim_start().starts_with('#'))
                .flat_map(str::split_whitespace)
                .map(str::to_lowercase)
                .collect(),
        )
    }

    pub fn load(path: &Path) -> Result<Self> {
        Ok(Stopwords::parse(&io::read_to_string(path)?))
    }
}

/// Lowercased alphanumeric runs.
fn terms(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .map(str::to_lowercase)
}

/// The `k` most frequent non-stopword terms; ties go to the alphabetically
/// smaller term.
pub fn top_k_terms(corpus: &[TranscriptDocument], stopwords: &Stopwords, k: usize) -> BTreeSet<String> {
    let mut freq: HashMap<String, usize> = HashMap::new();
    for doc in corpus {
        for t in &doc.turns {
            for w in terms(&t.text) {
                if !stopwords.0.contains(&w) && w.chars().any(char::is_alphabetic) {
                    *freq.entry(w).or_default() += 1;
                }
            }
        }
    }
    let mut ranked: Vec<(String, usize)> = freq.into_iter().collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    ranked.into_iter().take(k).map(|(w, _)| w).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImpactReport {
    /// Mean per-document |after - before| / before × 100 over whitespace
    /// tokens.
    pub word_count_delta_pct: f64,
    /// Share of the original top-K terms still in the top K after.
    pub topk_term_overlap_pct: f64,
    /// Share of turns whose lexicon sentiment sign is unchanged.
    pub sentiment_alignment_pct: f64,
    pub top_k: usize,
    pub documents: usize,
    pub turns: usize,
}

/// Compare an anonymized corpus with its original. Documents are paired by
/// doc_id and turns by index.
pub fn impact_report(
    original: &[TranscriptDocument],
    anonymized: &[TranscriptDocument],
    lexicon: &SentimentLexicon,
    stopwords: &Stopwords,
    top_k: usize,
) -> Result<ImpactReport> {
    let after: BTreeMap<&str, &TranscriptDocument> = anonymized.iter().map(|d| (d.doc_id.as_str(), d)).collect();
    let before_ids: BTreeSet<&str> = original.iter().map(|d| d.doc_id.as_str()).collect();
    let after_ids: BTreeSet<&str> = after.keys().copied().collect();
    if before_ids != after_ids || before_ids.len() != original.len() || after_ids.len() != anonymized.len() {
        let diff: Vec<&str> = before_ids.symmetric_difference(&after_ids).copied().collect();
        return Err(Error::MisalignedCorpora(if diff.is_empty() {
            "duplicate doc_id".into()
        } else {
            diff.join(", ")
        }));
    }

    let mut delta_sum = 0.0;
    let mut delta_docs = 0usize;
    let mut turns = 0usize;
    let mut aligned = 0usize;
    for b in original {
        let a = after[b.doc_id.as_str()];
        if a.turns.len() != b.turns.len() {
            return Err(Error::MisalignedCorpora(format!(
                "{} has {} turns before and {} after",
                b.doc_id,
                b.turns.len(),
                a.turns.len()
            )));
        }
        let wc_before = b.word_count();
        if wc_before > 0 {
            delta_sum += a.word_count().abs_diff(wc_before) as f64 / wc_before as f64 * 100.0;
            delta_docs += 1;
        }
        for (tb, ta) in b.turns.iter().zip(&a.turns) {
            turns += 1;
            if lexicon.sign(&tb.text) == lexicon.sign(&ta.text) {
                aligned += 1;
            }
        }
    }

    let top_before = top_k_terms(original, stopwords, top_k);
    let top_after = top_k_terms(anonymized, stopwords, top_k);
    let overlap = if top_before.is_empty() {
        100.0
    } else {
        top_before.intersection(&top_after).count() as f64 / top_before.len() as f64 * 100.0
    };
    Ok(ImpactReport {
        word_count_delta_pct: if delta_docs == 0 { 0.0 } else { delta_sum / delta_docs as f64 },
        topk_term_overlap_pct: overlap,
        sentiment_alignment_pct: if turns == 0 { 100.0 } else { aligned as f64 / turns as f64 * 100.0 },
        top_k,
        documents: original.len(),
        turns,
    })
}
