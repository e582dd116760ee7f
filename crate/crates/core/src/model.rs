//! Shared domain vocabulary: transcripts, spans, detections, risk classes,
//! strategies, verdicts, actions and gold annotations.
//!
//! The serde form of each type is its canonical JSON shape. Corpora are
//! newline-delimited JSON, one [`TranscriptDocument`] per line.

use std::collections::BTreeMap;
use std::fmt;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::text;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum SpeakerRole {
    Interviewer,
    Participant,
    Other(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Turn {
    pub index: usize,
    pub speaker_role: SpeakerRole,
    pub text: String,
}

fn default_language() -> String {
    "en".to_string()
}

/// One parsed interview.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TranscriptDocument {
    pub doc_id: String,
    #[serde(default)]
    pub case_label: String,
    pub turns: Vec<Turn>,
    #[serde(default)]
    pub metadata: BTreeMap<String, String>,
    #[serde(default = "default_language")]
    pub language_tag: String,
}

impl TranscriptDocument {
    pub fn new(doc_id: impl Into<String>) -> Self {
        TranscriptDocument {
            doc_id: doc_id.into(),
            case_label: String::new(),
            turns: Vec::new(),
            metadata: BTreeMap::new(),
            language_tag: default_language(),
        }
    }

    /// Append a turn with the next dense index.
    pub fn push_turn(&mut self, role: SpeakerRole, text: impl Into<String>) {
        let index = self.turns.len();
        self.turns.push(Turn {
            index,
            speaker_role: role,
            text: text.into(),
        });
    }

    pub fn word_count(&self) -> usize {
        self.turns.iter().map(|t| t.text.split_whitespace().count()).sum()
    }

    /// Checks the doc_id and dense-index invariants.
    pub fn validate(&self) -> Result<()> {
        if self.doc_id.is_empty() {
            return Err(Error::MalformedInput {
                line: 0,
                message: "empty doc_id".into(),
            });
        }
        for (i, t) in self.turns.iter().enumerate() {
            if t.index != i {
                return Err(Error::MalformedInput {
                    line: 0,
                    message: format!("{}: turn index {} at position {}", self.doc_id, t.index, i),
                });
            }
        }
        Ok(())
    }

    /// Text of `[start,end)` in a turn, if the span is in range.
    pub fn slice(&self, turn: usize, start: usize, end: usize) -> Option<&str> {
        self.turns.get(turn).and_then(|t| text::slice_chars(&t.text, start, end))
    }
}

/// A located piece of turn text. Offsets count Unicode scalar values.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TextSpan {
    pub doc_id: String,
    pub turn_index: usize,
    pub start: usize,
    pub end: usize,
    pub surface: String,
}

impl TextSpan {
    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end <= self.start
    }

    /// Same document and turn, and the half-open ranges intersect.
    pub fn overlaps(&self, other: &TextSpan) -> bool {
        self.doc_id == other.doc_id
            && self.turn_index == other.turn_index
            && self.start < other.end
            && other.start < self.end
    }

    /// Whether re-slicing the document reproduces `surface`.
    pub fn round_trips(&self, doc: &TranscriptDocument) -> bool {
        doc.doc_id == self.doc_id
            && self.start < self.end
            && doc.slice(self.turn_index, self.start, self.end) == Some(self.surface.as_str())
    }
}

/// The six identifier groups.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum IdentifierGroup {
    Direct,
    Indirect,
    BehavioralContextualExperiential,
    OrganizationalVisual,
    MetadataHidden,
    DemographicTemporalGeospatial,
}

impl IdentifierGroup {
    pub const ALL: [IdentifierGroup; 6] = [
        IdentifierGroup::Direct,
        IdentifierGroup::Indirect,
        IdentifierGroup::BehavioralContextualExperiential,
        IdentifierGroup::OrganizationalVisual,
        IdentifierGroup::MetadataHidden,
        IdentifierGroup::DemographicTemporalGeospatial,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            IdentifierGroup::Direct => "Direct",
            IdentifierGroup::Indirect => "Indirect",
            IdentifierGroup::BehavioralContextualExperiential => "BehavioralContextualExperiential",
            IdentifierGroup::OrganizationalVisual => "OrganizationalVisual",
            IdentifierGroup::MetadataHidden => "MetadataHidden",
            IdentifierGroup::DemographicTemporalGeospatial => "DemographicTemporalGeospatial",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|g| g.as_str().eq_ignore_ascii_case(s.trim()))
    }
}

impl fmt::Display for IdentifierGroup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct IdentifierCategory {
    pub group: IdentifierGroup,
    pub subtype: String,
}

impl IdentifierCategory {
    pub fn new(group: IdentifierGroup, subtype: impl Into<String>) -> Self {
        IdentifierCategory {
            group,
            subtype: subtype.into(),
        }
    }
}

/// Re-identification risk. Ordered `WeakIndirect < StrongIndirect < Direct`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum RiskClass {
    WeakIndirect,
    StrongIndirect,
    Direct,
}

impl RiskClass {
    pub const ALL: [RiskClass; 3] = [RiskClass::Direct, RiskClass::StrongIndirect, RiskClass::WeakIndirect];
}

impl fmt::Display for RiskClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            RiskClass::Direct => "Direct",
            RiskClass::StrongIndirect => "StrongIndirect",
            RiskClass::WeakIndirect => "WeakIndirect",
        };
        f.write_str(s)
    }
}

/// The higher of two risk classes.
pub fn risk_priority(a: RiskClass, b: RiskClass) -> RiskClass {
    a.max(b)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DetectionSource {
    Rule,
    Dictionary,
    Llm,
    Human,
}

impl DetectionSource {
    /// Tie-break rank when merging overlapping detections (higher wins).
    pub fn priority(self) -> u8 {
        match self {
            DetectionSource::Human => 3,
            DetectionSource::Rule => 2,
            DetectionSource::Dictionary => 1,
            DetectionSource::Llm => 0,
        }
    }
}

/// A located sensitive span.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "DetectionRecord", try_from = "DetectionRecord")]
pub struct Detection {
    pub detection_id: String,
    pub span: TextSpan,
    pub category: IdentifierCategory,
    pub risk: Option<RiskClass>,
    pub source: DetectionSource,
    pub confidence: f64,
    pub rationale: Option<String>,
}

impl Detection {
    /// Detection id derived from its location and source, stable across runs.
    pub fn make_id(span: &TextSpan, source: DetectionSource) -> String {
        let src = match source {
            DetectionSource::Rule => "rule",
            DetectionSource::Dictionary => "dict",
            DetectionSource::Llm => "llm",
            DetectionSource::Human => "human",
        };
        format!("{}:{}:{}-{}:{}", span.doc_id, span.turn_index, span.start, span.end, src)
    }

    pub fn new(span: TextSpan, category: IdentifierCategory, source: DetectionSource) -> Self {
        Detection {
            detection_id: Self::make_id(&span, source),
            span,
            category,
            risk: None,
            source,
            confidence: 1.0,
            rationale: None,
        }
    }

    /// Metadata detections carry a zero-length sentinel span at turn 0.
    pub fn is_metadata(&self) -> bool {
        self.category.group == IdentifierGroup::MetadataHidden && self.span.start == self.span.end
    }

    pub fn append_rationale(&mut self, note: &str) {
        self.rationale = Some(match self.rationale.take() {
            Some(r) if !r.is_empty() => format!("{r}; {note}"),
            _ => note.to_string(),
        });
    }
}

/// Flat export record for detections.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectionRecord {
    pub detection_id: String,
    pub doc_id: String,
    pub turn: usize,
    pub start: usize,
    pub end: usize,
    pub surface: String,
    pub group: IdentifierGroup,
    pub subtype: String,
    pub source: DetectionSource,
    pub confidence: f64,
    pub rationale: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub risk: Option<RiskClass>,
}

impl From<Detection> for DetectionRecord {
    fn from(d: Detection) -> Self {
        DetectionRecord {
            detection_id: d.detection_id,
            doc_id: d.span.doc_id,
            turn: d.span.turn_index,
            start: d.span.start,
            end: d.span.end,
            surface: d.span.surface,
            group: d.category.group,
            subtype: d.category.subtype,
            source: d.source,
            confidence: d.confidence,
            rationale: d.rationale,
            risk: d.risk,
        }
    }
}

impl TryFrom<DetectionRecord> for Detection {
    type Error = String;

    fn try_from(r: DetectionRecord) -> std::result::Result<Self, String> {
        if r.surface.is_empty() {
            return Err(format!("detection {} has an empty surface", r.detection_id));
        }
        if !(0.0..=1.0).contains(&r.confidence) {
            return Err(format!("detection {} confidence {} outside [0,1]", r.detection_id, r.confidence));
        }
        if r.end < r.start {
            return Err(format!("detection {} has end < start", r.detection_id));
        }
        Ok(Detection {
            detection_id: r.detection_id,
            span: TextSpan {
                doc_id: r.doc_id,
                turn_index: r.turn,
                start: r.start,
                end: r.end,
                surface: r.surface,
            },
            category: IdentifierCategory {
                group: r.group,
                subtype: r.subtype,
            },
            risk: r.risk,
            source: r.source,
            confidence: r.confidence,
            rationale: r.rationale,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Strategy {
    RuleBasedSubstitution,
    ContextAwareRewriting,
    Generalization,
    Suppression,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Technique {
    // substitution
    Pseudonym,
    Hashing,
    Tokenization,
    MappingTable,
    RegexRule,
    Synthetic,
    Perturbation,
    // rewriting
    RoleBased,
    ConditionalChain,
    LanguageAware,
    DescriptiveRoleMapping,
    // generalization
    Range,
    RegionRollup,
    RoleFamily,
    DateCoarsen,
    // suppression
    Full,
    Partial,
    Conditional,
}

impl Technique {
    pub fn strategy(self) -> Strategy {
        use Technique::*;
        match self {
            Pseudonym | Hashing | Tokenization | MappingTable | RegexRule | Synthetic | Perturbation => {
                Strategy::RuleBasedSubstitution
            }
            RoleBased | ConditionalChain | LanguageAware | DescriptiveRoleMapping => Strategy::ContextAwareRewriting,
            Range | RegionRollup | RoleFamily | DateCoarsen => Strategy::Generalization,
            Full | Partial | Conditional => Strategy::Suppression,
        }
    }
}

/// A strategy together with a technique valid for it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "RawStrategyKind")]
pub struct StrategyKind {
    pub strategy: Strategy,
    pub technique: Technique,
}

#[derive(Deserialize)]
struct RawStrategyKind {
    strategy: Strategy,
    technique: Technique,
}

impl TryFrom<RawStrategyKind> for StrategyKind {
    type Error = String;

    fn try_from(raw: RawStrategyKind) -> std::result::Result<Self, String> {
        StrategyKind::new(raw.strategy, raw.technique)
            .ok_or_else(|| format!("technique {:?} is not valid for {:?}", raw.technique, raw.strategy))
    }
}

impl StrategyKind {
    pub fn new(strategy: Strategy, technique: Technique) -> Option<Self> {
        (technique.strategy() == strategy).then_some(StrategyKind { strategy, technique })
    }

    /// Build from a technique alone; the strategy is implied.
    pub const fn of(technique: Technique) -> Self {
        use Technique::*;
        let strategy = match technique {
            Pseudonym | Hashing | Tokenization | MappingTable | RegexRule | Synthetic | Perturbation => {
                Strategy::RuleBasedSubstitution
            }
            RoleBased | ConditionalChain | LanguageAware | DescriptiveRoleMapping => Strategy::ContextAwareRewriting,
            Range | RegionRollup | RoleFamily | DateCoarsen => Strategy::Generalization,
            Full | Partial | Conditional => Strategy::Suppression,
        };
        StrategyKind { strategy, technique }
    }
}

impl fmt::Display for StrategyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}({:?})", self.strategy, self.technique)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Decision {
    Accept,
    Reject,
    Reclassify { category: IdentifierCategory, risk: RiskClass },
}

/// A reviewer's ruling on one detection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub detection_id: String,
    pub decision: Decision,
    #[serde(default)]
    pub strategy_override: Option<StrategyKind>,
    pub reviewer: String,
    pub timestamp: DateTime<Utc>,
}

/// Fold an append-only verdict log into the final verdict per detection
/// (later entries supersede earlier ones).
pub fn final_verdicts(log: &[Verdict]) -> BTreeMap<String, Verdict> {
    let mut out = BTreeMap::new();
    for v in log {
        out.insert(v.detection_id.clone(), v.clone());
    }
    out
}

/// How far an action reaches inside its turn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ActionScope {
    /// Replace exactly the applied span.
    Span,
    /// Replace the whole turn text (context-aware rewriting).
    Turn,
    /// The value lived in document metadata; no text changes.
    Metadata,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnonymizationAction {
    pub detection_id: String,
    pub strategy: StrategyKind,
    pub replacement: String,
    pub original_surface: String,
    pub applied_span: TextSpan,
    pub scope: ActionScope,
}

/// One line of the audit log. Field order is part of the file format.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuditRecord {
    pub detection_id: String,
    pub doc_id: String,
    pub turn: usize,
    pub start: usize,
    pub end: usize,
    pub strategy: Strategy,
    pub technique: Technique,
    pub original: String,
    pub replacement: String,
}

impl From<&AnonymizationAction> for AuditRecord {
    fn from(a: &AnonymizationAction) -> Self {
        AuditRecord {
            detection_id: a.detection_id.clone(),
            doc_id: a.applied_span.doc_id.clone(),
            turn: a.applied_span.turn_index,
            start: a.applied_span.start,
            end: a.applied_span.end,
            strategy: a.strategy.strategy,
            technique: a.strategy.technique,
            original: a.original_surface.clone(),
            replacement: a.replacement.clone(),
        }
    }
}

/// A reference span with its true category and risk.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(into = "GoldRecord", from = "GoldRecord")]
pub struct GoldAnnotation {
    pub span: TextSpan,
    pub category: IdentifierCategory,
    pub risk: RiskClass,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GoldRecord {
    pub turn: usize,
    pub start: usize,
    pub end: usize,
    pub surface: String,
    pub group: IdentifierGroup,
    pub subtype: String,
    pub risk: RiskClass,
    /// Filled from the enclosing document object when absent.
    #[serde(default, skip_serializing)]
    pub doc_id: String,
}

impl From<GoldAnnotation> for GoldRecord {
    fn from(g: GoldAnnotation) -> Self {
        GoldRecord {
            turn: g.span.turn_index,
            start: g.span.start,
            end: g.span.end,
            surface: g.span.surface,
            group: g.category.group,
            subtype: g.category.subtype,
            risk: g.risk,
            doc_id: g.span.doc_id,
        }
    }
}

impl From<GoldRecord> for GoldAnnotation {
    fn from(r: GoldRecord) -> Self {
        GoldAnnotation {
            span: TextSpan {
                doc_id: r.doc_id,
                turn_index: r.turn,
                start: r.start,
                end: r.end,
                surface: r.surface,
            },
            category: IdentifierCategory {
                group: r.group,
                subtype: r.subtype,
            },
            risk: r.risk,
        }
    }
}

/// One line of a gold file: every annotation of one document.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GoldDocument {
    pub doc_id: String,
    pub annotations: Vec<GoldAnnotation>,
}

/// Reference annotations keyed by doc_id.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct GoldAnnotationSet {
    pub docs: BTreeMap<String, Vec<GoldAnnotation>>,
}

impl GoldAnnotationSet {
    pub fn len(&self) -> usize {
        self.docs.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get(&self, doc_id: &str) -> &[GoldAnnotation] {
        self.docs.get(doc_id).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn to_documents(&self) -> Vec<GoldDocument> {
        self.docs
            .iter()
            .map(|(doc_id, anns)| GoldDocument {
                doc_id: doc_id.clone(),
                annotations: anns.clone(),
            })
            .collect()
    }
}
