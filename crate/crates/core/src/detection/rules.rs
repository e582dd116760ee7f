//! Regular-expression detectors.

use std::collections::BTreeSet;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Detection, DetectionSource, IdentifierCategory, IdentifierGroup, TextSpan, TranscriptDocument};
use crate::text::CharIndex;

const DEFAULT_RULES: &str = include_str!("../../data/rules.json");

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RuleSpec {
    pub name: String,
    pub pattern: String,
    pub subtype: String,
    pub group: IdentifierGroup,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RulePack {
    pub rules: Vec<RuleSpec>,
}

impl Default for RulePack {
    /// Email, phone, URL, dates, username-like tokens and structured ID codes.
    fn default() -> Self {
        serde_json::from_str(DEFAULT_RULES).expect("shipped rule pack parses")
    }
}

/// A rule pack whose patterns have been compiled and names checked.
#[derive(Debug, Clone)]
pub struct CompiledRules {
    rules: Vec<(RuleSpec, Regex)>,
}

impl RulePack {
    pub fn compile(&self) -> Result<CompiledRules> {
        let mut names = BTreeSet::new();
        let mut rules = Vec::with_capacity(self.rules.len());
        for spec in &self.rules {
            if !names.insert(spec.name.as_str()) {
                return Err(Error::Config(format!("duplicate rule name {:?}", spec.name)));
            }
            let re = Regex::new(&spec.pattern)
                .map_err(|e| Error::Config(format!("rule {:?} does not compile: {e}", spec.name)))?;
            rules.push((spec.clone(), re));
        }
        Ok(CompiledRules { rules })
    }
}

impl CompiledRules {
    pub fn len(&self) -> usize {
        self.rules.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rules.is_empty()
    }
}

impl Default for CompiledRules {
    fn default() -> Self {
        RulePack::default().compile().expect("shipped rules compile")
    }
}

/// One detection per non-overlapping match of each rule.
pub fn detect_rules(doc: &TranscriptDocument, rules: &CompiledRules) -> Vec<Detection> {
    let mut out = Vec::new();
    for turn in &doc.turns {
        let idx = CharIndex::new(&turn.text);
        for (spec, re) in &rules.rules {
            for m in re.find_iter(&turn.text) {
                if m.as_str().is_empty() {
                    continue;
                }
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
                let mut d = Detection::new(
                    span,
                    IdentifierCategory::new(spec.group, spec.subtype.clone()),
                    DetectionSource::Rule,
                );
                d.rationale = Some(format!("rule:{}", spec.name));
                out.push(d);
            }
        }
    }
    out
}
