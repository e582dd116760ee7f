//! Seeded synthetic transcripts with planted identifiers and exact reference
//! annotations, for testing at desk scale.
//!
//! Documents are filler sentences drawn from a lowercase vocabulary that no
//! shipped rule can match, with identifier sentences spliced in. Offsets of
//! each planted value are recorded as the text is built, so the reference set
//! is exact by construction.

use std::collections::BTreeSet;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::classification::RiskPolicy;
use crate::detection::{Gazetteer, GazetteerEntry};
use crate::error::{Error, Result};
use crate::model::{
    GoldAnnotation, GoldAnnotationSet, IdentifierCategory, SpeakerRole, TextSpan, TranscriptDocument,
};
use crate::taxonomy::Taxonomy;
use crate::text::char_len;

/// Subtypes whose planted values follow the shipped rule grammar.
pub const RULE_SUBTYPES: [&str; 6] = ["email", "phone", "url", "id-code", "date", "username"];

/// Subtypes whose planted values are listed in the emitted gazetteer.
pub const GAZETTEER_SUBTYPES: [&str; 4] = ["person-name", "organization", "location", "institution"];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenSpec {
    pub documents: usize,
    pub plants_per_doc: usize,
    /// Subtypes to plant, drawn uniformly per plant.
    pub subtypes: Vec<String>,
    pub turns_per_doc: usize,
    /// Approximate filler words per document.
    pub filler_words: usize,
    /// Assigned round-robin.
    pub case_labels: Vec<String>,
}

impl Default for GenSpec {
    fn default() -> Self {
        GenSpec {
            documents: 50,
            plants_per_doc: 5,
            subtypes: RULE_SUBTYPES.iter().map(|s| s.to_string()).collect(),
            turns_per_doc: 8,
            filler_words: 400,
            case_labels: vec!["A".into(), "B".into()],
        }
    }
}

impl GenSpec {
    pub fn validate(&self, taxonomy: &Taxonomy) -> Result<()> {
        if self.plants_per_doc > 0 && self.subtypes.is_empty() {
            return Err(Error::Spec("plants requested but no subtypes listed".into()));
        }
        for s in &self.subtypes {
            if !RULE_SUBTYPES.contains(&s.as_str()) && !GAZETTEER_SUBTYPES.contains(&s.as_str()) {
                return Err(Error::Spec(format!("cannot generate values for subtype {s:?}")));
            }
            if !taxonomy.contains(s) {
                return Err(Error::Spec(format!("subtype {s:?} is not in the taxonomy")));
            }
        }
        if self.turns_per_doc == 0 {
            return Err(Error::Spec("turns_per_doc must be at least 1".into()));
        }
        if self.case_labels.is_empty() {
            return Err(Error::Spec("at least one case label is needed".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedCorpus {
    pub corpus: Vec<TranscriptDocument>,
    pub gold: GoldAnnotationSet,
    /// Every planted gazetteer-subtype value.
    pub gazetteer: Gazetteer,
}

const FIRST: &[&str] = &[
    "Kamal", "Nimali", "Ruwan", "Tharindu", "Dilani", "Ayesha", "Sunil", "Chamari", "Priya", "Mahesh", "Ishara",
    "Lahiru",
];
const LAST: &[&str] = &[
    "Perera", "Fernando", "Silva", "Jayasuriya", "Wickramasinghe", "Bandara", "Gunawardena", "Rajapaksha", "Dissanayake",
];
const ORGS: &[&str] = &[
    "Northwind Analytics", "Bluepeak Software", "Lotus Data Labs", "Harbourline Systems", "Cinnamon Cloud",
];
const PLACES: &[&str] = &["Kandy", "Galle", "Jaffna", "Matara", "Kurunegala", "Negombo"];
const INSTITUTIONS: &[&str] = &["University of Ruhuna", "University of Peradeniya", "Moratuwa Institute of Technology"];
const DOMAINS: &[&str] = &["lankamail.lk", "example.org", "campus.ac.lk", "workmail.com"];
const MONTHS: &[&str] = &[
    "January", "February", "March", "April", "May", "June", "July", "August", "September", "October", "November",
    "December",
];
const HANDLE_WORDS: &[&str] = &["River", "Falcon", "Cedar", "Nova", "Amber", "Delta", "Quartz", "Willow"];
const LETTERS: &[u8] = b"ABCDEFGHJKLMNPRSTUVWXYZ";

/// Lowercase filler vocabulary. A few sentiment words keep the alignment
/// measure meaningful.
const VOCAB: &[&str] = &[
    "we", "discussed", "the", "project", "team", "process", "during", "meetings", "and", "after", "reviews", "often",
    "data", "model", "tools", "used", "for", "work", "it", "was", "quite", "useful", "sometimes", "challenging",
    "people", "shared", "ideas", "about", "privacy", "training", "with", "our", "clients", "new", "methods", "every",
    "week", "documents", "testing", "release", "planning", "support", "questions", "answers", "good", "helpful",
    "difficult", "slow", "interesting", "later", "then", "also", "very", "usually", "systems", "users", "feedback",
];

const TEMPLATES: &[(&str, &[&str])] = &[
    ("email", &["You can write to me at {} about that.", "My work address was {} back then."]),
    ("phone", &["They called me on {} after the meeting.", "My number at the office is {} now."]),
    ("url", &["The notes are on {} for the team.", "We published it at {} last year."]),
    ("id-code", &["The case file was {} in the tracker.", "I filed ticket {} about it."]),
    ("date", &["That started on {} if I recall.", "The review happened on {} at the office."]),
    ("username", &["My login there is {} for everything.", "People know me online as {} now."]),
    ("person-name", &["I worked closely with {} on that.", "My manager was {} at the time."]),
    ("organization", &["Before that I was at {} for a while.", "The client was {} in that case."]),
    ("location", &["Our office is in {} near the station.", "I moved to {} for the job."]),
    ("institution", &["I studied at {} before joining.", "We partnered with {} for the study."]),
];

fn value(subtype: &str, rng: &mut ChaCha8Rng) -> String {
    let pick = |xs: &[&str], rng: &mut ChaCha8Rng| xs.choose(rng).copied().unwrap_or_default().to_string();
    match subtype {
        "email" => format!(
            "{}.{}{}@{}",
            pick(FIRST, rng).to_lowercase(),
            pick(LAST, rng).to_lowercase(),
            rng.random_range(10..100),
            pick(DOMAINS, rng)
        ),
        "phone" => format!(
            "+94 {} {:03} {:04}",
            rng.random_range(70..80),
            rng.random_range(100..1000),
            rng.random_range(0..10000)
        ),
        "url" => format!(
            "https://www.{}.org/{}",
            pick(HANDLE_WORDS, rng).to_lowercase(),
            pick(VOCAB, rng)
        ),
        "id-code" => {
            let mut letters = || LETTERS[rng.random_range(0..LETTERS.len())] as char;
            let (a, b, c, d) = (letters(), letters(), letters(), letters());
            format!("{:02}{a}{b}-{:03}-{c}{d}", rng.random_range(10..100), rng.random_range(100..1000))
        }
        "date" => {
            let (y, m, d) = (rng.random_range(2015..2025), rng.random_range(1..13), rng.random_range(1..29));
            match rng.random_range(0..3) {
                0 => format!("{y}-{m:02}-{d:02}"),
                1 => format!("{d:02}/{m:02}/{y}"),
                _ => format!("{} {y}", MONTHS[m as usize - 1]),
            }
        }
        "username" => format!("{}{}{}", pick(HANDLE_WORDS, rng), pick(HANDLE_WORDS, rng), rng.random_range(10..100)),
        "person-name" => format!("{} {}", pick(FIRST, rng), pick(LAST, rng)),
        "organization" => pick(ORGS, rng),
        "location" => pick(PLACES, rng),
        "institution" => pick(INSTITUTIONS, rng),
        other => unreachable!("subtype {other} passed validation"),
    }
}

fn filler_sentence(rng: &mut ChaCha8Rng, words: usize) -> String {
    let mut s: Vec<String> = (0..words).map(|_| VOCAB.choose(rng).copied().unwrap_or("we").to_string()).collect();
    if let Some(first) = s.first_mut() {
        let mut c = first.chars();
        *first = c.next().map(|h| h.to_uppercase().chain(c).collect()).unwrap_or_default();
    }
    format!("{}.", s.join(" "))
}

/// A planned sentence: plain filler, or a template with a planted value.
enum Piece {
    Filler(String),
    Plant { subtype: String, before: String, value: String, after: String },
}

/// Generate a corpus from `seed`. Regenerating with the same seed and spec
/// gives identical output.
pub fn generate(seed: u64, spec: &GenSpec, taxonomy: &Taxonomy, policy: &RiskPolicy) -> Result<GeneratedCorpus> {
    spec.validate(taxonomy)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = GeneratedCorpus {
        corpus: Vec::with_capacity(spec.documents),
        gold: GoldAnnotationSet::default(),
        gazetteer: Gazetteer::default(),
    };
    let mut gaz_seen: BTreeSet<(String, String)> = BTreeSet::new();
    let words_per_turn = (spec.filler_words / spec.turns_per_doc).max(1);

    for i in 0..spec.documents {
        let doc_id = format!("gen-{i:04}");
        let mut turns: Vec<Vec<Piece>> = (0..spec.turns_per_doc)
            .map(|_| {
                let mut left = words_per_turn;
                let mut pieces = Vec::new();
                while left > 0 {
                    let n = rng.random_range(8..15).min(left);
                    pieces.push(Piece::Filler(filler_sentence(&mut rng, n)));
                    left -= n;
                }
                pieces
            })
            .collect();
        for _ in 0..spec.plants_per_doc {
            let subtype = spec.subtypes.choose(&mut rng).expect("validated non-empty").clone();
            let templates = TEMPLATES.iter().find(|(s, _)| *s == subtype).map(|(_, t)| *t).expect("template exists");
            let template = templates.choose(&mut rng).expect("non-empty");
            let (before, after) = template.split_once("{}").expect("template has a slot");
            let value = value(&subtype, &mut rng);
            let turn = rng.random_range(0..turns.len());
            let at = rng.random_range(0..=turns[turn].len());
            turns[turn].insert(
                at,
                Piece::Plant {
                    subtype,
                    before: before.to_string(),
                    value,
                    after: after.to_string(),
                },
            );
        }

        let mut doc = TranscriptDocument::new(&doc_id);
        doc.case_label = spec.case_labels[i % spec.case_labels.len()].clone();
        let mut anns = Vec::new();
        for (t, pieces) in turns.into_iter().enumerate() {
            let mut text = String::new();
            for p in pieces {
                if !text.is_empty() {
                    text.push(' ');
                }
                match p {
                    Piece::Filler(s) => text.push_str(&s),
                    Piece::Plant { subtype, before, value, after } => {
                        text.push_str(&before);
                        let start = char_len(&text);
                        text.push_str(&value);
                        let end = char_len(&text);
                        text.push_str(&after);
                        let group = taxonomy.group_of(&subtype).expect("validated subtype");
                        let risk = policy
                            .risk_of(&subtype)
                            .ok_or_else(|| Error::Spec(format!("risk policy has no class for {subtype}")))?;
                        if GAZETTEER_SUBTYPES.contains(&subtype.as_str()) && gaz_seen.insert((subtype.clone(), value.clone())) {
                            out.gazetteer.insert(&subtype, GazetteerEntry::Plain(value.clone()));
                        }
                        anns.push(GoldAnnotation {
                            span: TextSpan {
                                doc_id: doc_id.clone(),
                                turn_index: t,
                                start,
                                end,
                                surface: value,
                            },
                            category: IdentifierCategory::new(group, subtype),
                            risk,
                        });
                    }
                }
            }
            let role = if t % 2 == 0 { SpeakerRole::Interviewer } else { SpeakerRole::Participant };
            doc.push_turn(role, text);
        }
        out.gold.docs.insert(doc_id, anns);
        out.corpus.push(doc);
    }
    Ok(out)
}
