//! Turning classified detections into anonymization actions, and applying
//! those actions to documents.

use std::collections::BTreeMap;

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::generalize::{perturb_number, GeneralizationHierarchy};
use super::matrix::{select_strategy, StrategyMatrix};
use super::rewrite::{residual_surfaces, rewrite_contextual, RewriteConfig};
use super::suppress::{conditional_applies, suppress_partial, CorpusStats, REDACTED};
use super::vault::Vault;
use super::{dates, substitute_label};
use crate::error::{Error, Result};
use crate::llm::LlmClient;
use crate::model::{
    ActionScope, AnonymizationAction, AuditRecord, Decision, Detection, RiskClass, Strategy, StrategyKind, Technique,
    TextSpan, TranscriptDocument, Verdict,
};
use crate::text::{char_len, normalize_ws, slice_chars};

/// A regex replacement applied to the surface by the `RegexRule` technique.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegexReplacement {
    pub pattern: String,
    pub replacement: String,
}

/// Everything that shapes replacement text.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnonymizationConfig {
    pub matrix: StrategyMatrix,
    /// Subtype to alias label (`person-name` → `Person` gives `[Person_1]`).
    /// Unlisted subtypes use the subtype in CamelCase.
    pub labels: BTreeMap<String, String>,
    /// Replace a titled name such as "Dr. Nilmini" by the title's label
    /// ("[Doctor]") instead of a numbered alias.
    pub preserve_titles: bool,
    pub titles: BTreeMap<String, String>,
    pub generalization_level: usize,
    /// Read `12/05/2020` as 12 May.
    pub day_first: bool,
    pub number_bucket_width: f64,
    /// Conditional suppression threshold: suppress surfaces found in fewer
    /// than this many documents.
    pub conditional_k: usize,
    /// Subtype to the pattern of the part kept by partial suppression.
    pub partial_keep: BTreeMap<String, String>,
    /// Replacement pools for `MappingTable` and `Synthetic`.
    pub pools: BTreeMap<String, Vec<String>>,
    pub regex_rules: BTreeMap<String, Vec<RegexReplacement>>,
    /// Role phrases for `DescriptiveRoleMapping`.
    pub role_labels: BTreeMap<String, String>,
    pub rewrite: RewriteConfig,
}

fn string_map(pairs: &[(&str, &str)]) -> BTreeMap<String, String> {
    pairs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect()
}

impl Default for AnonymizationConfig {
    fn default() -> Self {
        AnonymizationConfig {
            matrix: StrategyMatrix::default(),
            labels: string_map(&[("person-name", "Person"), ("organization", "Company"), ("institution", "University")]),
            preserve_titles: false,
            titles: string_map(&[("Dr.", "Doctor"), ("Prof.", "Professor")]),
            generalization_level: 1,
            day_first: true,
            number_bucket_width: 10.0,
            conditional_k: 2,
            partial_keep: string_map(&[("email", r"@.+$"), ("url", r"^(?:https?://)?[^/]+")]),
            pools: BTreeMap::new(),
            regex_rules: BTreeMap::new(),
            role_labels: string_map(&[
                ("role-in-narrative", "a team member"),
                ("job-title", "a staff member"),
                ("small-group-role", "a group member"),
                ("unique-event", "a work activity"),
            ]),
            rewrite: RewriteConfig::default(),
        }
    }
}

/// A detection cleared for anonymization, with the reviewer's strategy
/// override if any.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlannedDetection {
    pub detection: Detection,
    #[serde(default)]
    pub strategy_override: Option<StrategyKind>,
}

impl PlannedDetection {
    pub fn accepted(detection: Detection) -> Self {
        PlannedDetection {
            detection,
            strategy_override: None,
        }
    }
}

/// Fold the verdict log into the detections to anonymize: rejected ones are
/// dropped, reclassified ones take the new category and risk. Detections
/// without a verdict are accepted only when `auto_accept` is set.
pub fn resolve_verdicts(detections: &[Detection], log: &[Verdict], auto_accept: bool) -> Result<Vec<PlannedDetection>> {
    let finals = crate::model::final_verdicts(log);
    let unreviewed: Vec<String> = detections
        .iter()
        .filter(|d| !finals.contains_key(&d.detection_id))
        .map(|d| d.detection_id.clone())
        .collect();
    if !auto_accept && !unreviewed.is_empty() {
        return Err(Error::UnreviewedDetections(unreviewed));
    }
    let mut out = Vec::new();
    for d in detections {
        let Some(v) = finals.get(&d.detection_id) else {
            out.push(PlannedDetection::accepted(d.clone()));
            continue;
        };
        let mut det = d.clone();
        match &v.decision {
            Decision::Reject => continue,
            Decision::Accept => {}
            Decision::Reclassify { category, risk } => {
                det.category = category.clone();
                det.risk = Some(*risk);
            }
        }
        out.push(PlannedDetection {
            detection: det,
            strategy_override: v.strategy_override,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    /// Rewriting was skipped or rejected; the spans were substituted instead.
    RewriteFallback,
    /// A replacement still contained the original and was redacted.
    ReplacementRedacted,
    /// A technique could not handle the surface and another one was used.
    TechniqueFallback,
}

/// Something the planner did that a reviewer should know about.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlanEvent {
    pub doc_id: String,
    pub turn: usize,
    pub detection_ids: Vec<String>,
    pub kind: EventKind,
    pub detail: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Plan {
    pub actions: Vec<AnonymizationAction>,
    pub events: Vec<PlanEvent>,
}

/// Suppression variants.
#[derive(Debug, Clone)]
pub enum SuppressMode<'a> {
    Full,
    Partial(&'a Regex),
    Conditional(usize),
}

fn action(d: &Detection, technique: Technique, replacement: String) -> AnonymizationAction {
    AnonymizationAction {
        detection_id: d.detection_id.clone(),
        strategy: StrategyKind::of(technique),
        replacement,
        original_surface: d.span.surface.clone(),
        applied_span: d.span.clone(),
        scope: if d.is_metadata() { ActionScope::Metadata } else { ActionScope::Span },
    }
}

/// Pseudonym substitution through the vault's alias table.
pub fn substitute(d: &Detection, vault: &mut Vault, cfg: &AnonymizationConfig) -> AnonymizationAction {
    if cfg.preserve_titles && d.category.subtype == "person-name" {
        let mut titles: Vec<(&String, &String)> = cfg.titles.iter().collect();
        titles.sort_by_key(|(t, _)| std::cmp::Reverse(t.len()));
        for (title, label) in titles {
            let rest = d.span.surface.strip_prefix(title.as_str());
            if rest.is_some_and(|r| r.starts_with(char::is_whitespace)) {
                return action(d, Technique::Pseudonym, format!("[{label}]"));
            }
        }
    }
    let label = substitute_label(&cfg.labels, &d.category.subtype);
    let alias = vault.alias(&d.category.subtype, &d.span.surface, &label);
    action(d, Technique::Pseudonym, alias)
}

pub fn hash_alias(d: &Detection, vault: &Vault) -> AnonymizationAction {
    action(d, Technique::Hashing, vault.hash_alias(&d.category.subtype, &d.span.surface))
}

pub fn tokenize(d: &Detection, vault: &mut Vault) -> AnonymizationAction {
    action(d, Technique::Tokenization, vault.tokenize(&d.span.surface))
}

/// Shift a date by the document's vault offset, keeping its written shape.
pub fn perturb_date(d: &Detection, vault: &mut Vault, day_first: bool) -> Result<AnonymizationAction> {
    let parsed =
        dates::parse_date(&d.span.surface, day_first).ok_or_else(|| Error::UnparseableDate(d.span.surface.clone()))?;
    let offset = vault.date_offset(&d.span.doc_id);
    Ok(action(d, Technique::Perturbation, dates::shift(parsed, offset)))
}

fn generalization_technique(subtype: &str, h: &GeneralizationHierarchy) -> Technique {
    match h.get(subtype) {
        Some(s) if s.coarsen_dates => Technique::DateCoarsen,
        Some(s) if !s.bands.is_empty() || s.bucket_width.is_some() => Technique::Range,
        _ if subtype == "location" => Technique::RegionRollup,
        _ => Technique::RoleFamily,
    }
}

pub fn generalize(d: &Detection, h: &GeneralizationHierarchy, level: usize, day_first: bool) -> AnonymizationAction {
    let replacement = h.generalize(&d.category.subtype, &d.span.surface, level, day_first);
    action(d, generalization_technique(&d.category.subtype, h), replacement)
}

/// `None` when conditional suppression does not fire for this surface.
pub fn suppress(d: &Detection, mode: SuppressMode<'_>, stats: &CorpusStats) -> Option<AnonymizationAction> {
    match mode {
        SuppressMode::Full => Some(action(d, Technique::Full, REDACTED.into())),
        SuppressMode::Partial(keep) => Some(match suppress_partial(&d.span.surface, keep) {
            Some(r) => action(d, Technique::Partial, r),
            None => action(d, Technique::Full, REDACTED.into()),
        }),
        SuppressMode::Conditional(k) => {
            conditional_applies(&d.span.surface, k, stats).then(|| action(d, Technique::Conditional, REDACTED.into()))
        }
    }
}

/// Planner bound to one configuration, hierarchy, model and corpus.
pub struct Anonymizer<'a> {
    cfg: &'a AnonymizationConfig,
    hierarchy: &'a GeneralizationHierarchy,
    client: Option<&'a dyn LlmClient>,
    stats: &'a CorpusStats,
    partial: BTreeMap<String, Regex>,
    regex_rules: BTreeMap<String, Vec<(Regex, String)>>,
}

impl<'a> Anonymizer<'a> {
    pub fn new(
        cfg: &'a AnonymizationConfig,
        hierarchy: &'a GeneralizationHierarchy,
        client: Option<&'a dyn LlmClient>,
        stats: &'a CorpusStats,
    ) -> Result<Self> {
        let compile = |p: &str| Regex::new(p).map_err(|e| Error::Config(format!("pattern {p:?}: {e}")));
        let partial = cfg
            .partial_keep
            .iter()
            .map(|(k, p)| Ok((k.clone(), compile(p)?)))
            .collect::<Result<_>>()?;
        let regex_rules = cfg
            .regex_rules
            .iter()
            .map(|(k, rules)| {
                let compiled = rules
                    .iter()
                    .map(|r| Ok((compile(&r.pattern)?, r.replacement.clone())))
                    .collect::<Result<Vec<_>>>()?;
                Ok((k.clone(), compiled))
            })
            .collect::<Result<_>>()?;
        if cfg.generalization_level == 0 {
            return Err(Error::Config("generalization_level starts at 1".into()));
        }
        Ok(Anonymizer {
            cfg,
            hierarchy,
            client,
            stats,
            partial,
            regex_rules,
        })
    }

    fn generalize(&self, d: &Detection) -> AnonymizationAction {
        generalize(d, self.hierarchy, self.cfg.generalization_level, self.cfg.day_first)
    }

    /// Replacement for one span under `kind`, falling back when the technique
    /// cannot handle the surface.
    fn span_action(&self, d: &Detection, kind: StrategyKind, vault: &mut Vault, events: &mut Vec<PlanEvent>) -> AnonymizationAction {
        let mut fallback = |why: String| {
            events.push(PlanEvent {
                doc_id: d.span.doc_id.clone(),
                turn: d.span.turn_index,
                detection_ids: vec![d.detection_id.clone()],
                kind: EventKind::TechniqueFallback,
                detail: why,
            })
        };
        let subtype = d.category.subtype.as_str();
        let a = match kind.technique {
            Technique::Pseudonym => substitute(d, vault, self.cfg),
            Technique::Hashing => hash_alias(d, vault),
            Technique::Tokenization => tokenize(d, vault),
            Technique::MappingTable | Technique::Synthetic => match self.cfg.pools.get(subtype).filter(|p| !p.is_empty()) {
                Some(pool) => {
                    let digest = vault.digest(&[subtype, &crate::text::normalize_key(&d.span.surface)]);
                    let i = u64::from_be_bytes(digest[..8].try_into().expect("8 bytes")) % pool.len() as u64;
                    action(d, kind.technique, pool[i as usize].clone())
                }
                None => {
                    fallback(format!("no replacement pool for {subtype}; substituted"));
                    substitute(d, vault, self.cfg)
                }
            },
            Technique::RegexRule => {
                let mut out = d.span.surface.clone();
                let mut hit = false;
                for (re, rep) in self.regex_rules.get(subtype).into_iter().flatten() {
                    if re.is_match(&out) {
                        hit = true;
                        out = re.replace_all(&out, rep.as_str()).into_owned();
                    }
                }
                if hit {
                    action(d, Technique::RegexRule, out)
                } else {
                    fallback(format!("no regex rule matched {subtype}; redacted"));
                    action(d, Technique::Full, REDACTED.into())
                }
            }
            Technique::Perturbation => match perturb_date(d, vault, self.cfg.day_first) {
                Ok(a) => a,
                Err(_) => match perturb_number(&d.span.surface, self.cfg.number_bucket_width) {
                    Ok(r) => action(d, Technique::Perturbation, r),
                    Err(_) => {
                        fallback("neither a date nor a number; generalized".into());
                        self.generalize(d)
                    }
                },
            },
            Technique::Range | Technique::RegionRollup | Technique::RoleFamily | Technique::DateCoarsen => {
                let mut a = self.generalize(d);
                a.strategy = kind;
                a
            }
            Technique::Full => action(d, Technique::Full, REDACTED.into()),
            Technique::Partial => {
                let keep = self.partial.get(subtype);
                match keep {
                    Some(re) => suppress(d, SuppressMode::Partial(re), self.stats).expect("partial always acts"),
                    None => action(d, Technique::Full, REDACTED.into()),
                }
            }
            Technique::Conditional => match suppress(d, SuppressMode::Conditional(self.cfg.conditional_k), self.stats) {
                Some(a) => a,
                None if d.risk == Some(RiskClass::WeakIndirect) => self.generalize(d),
                None => substitute(d, vault, self.cfg),
            },
            Technique::DescriptiveRoleMapping => {
                let label = self
                    .cfg
                    .role_labels
                    .get(subtype)
                    .cloned()
                    .unwrap_or_else(|| self.hierarchy.generalize(subtype, &d.span.surface, 1, self.cfg.day_first));
                action(d, Technique::DescriptiveRoleMapping, label)
            }
            Technique::RoleBased | Technique::ConditionalChain | Technique::LanguageAware => substitute(d, vault, self.cfg),
        };
        self.post_check(d, a, events)
    }

    /// High-risk replacements must not carry the original text.
    fn post_check(&self, d: &Detection, mut a: AnonymizationAction, events: &mut Vec<PlanEvent>) -> AnonymizationAction {
        let high = matches!(d.risk, Some(RiskClass::Direct | RiskClass::StrongIndirect));
        if high && !residual_surfaces(&a.replacement, &[&d.span.surface]).is_empty() {
            events.push(PlanEvent {
                doc_id: d.span.doc_id.clone(),
                turn: d.span.turn_index,
                detection_ids: vec![d.detection_id.clone()],
                kind: EventKind::ReplacementRedacted,
                detail: format!("{} replacement {:?} contained the original", a.strategy, a.replacement),
            });
            a.strategy = StrategyKind::of(Technique::Full);
            a.replacement = REDACTED.into();
        }
        a
    }

    fn wants_model_rewrite(&self, doc: &TranscriptDocument, p: &PlannedDetection, kind: StrategyKind) -> bool {
        if kind.strategy != Strategy::ContextAwareRewriting || kind.technique == Technique::DescriptiveRoleMapping {
            return false;
        }
        if p.strategy_override.is_some() {
            return true;
        }
        let d = &p.detection;
        let text = &doc.turns[d.span.turn_index].text;
        self.cfg.rewrite.should_rewrite(text, &d.category.subtype, d.span.start, d.span.end)
    }

    /// Plan one document. Alias minting follows turn and span order, so a
    /// corpus planned in doc_id order numbers entities by first appearance.
    pub fn plan_document(&self, doc: &TranscriptDocument, planned: &[PlannedDetection], vault: &mut Vault) -> Result<Plan> {
        let mut items: Vec<&PlannedDetection> = planned.iter().filter(|p| p.detection.span.doc_id == doc.doc_id).collect();
        items.sort_by(|a, b| {
            let (a, b) = (&a.detection, &b.detection);
            (a.is_metadata(), a.span.turn_index, a.span.start, a.span.end, &a.detection_id).cmp(&(
                b.is_metadata(),
                b.span.turn_index,
                b.span.start,
                b.span.end,
                &b.detection_id,
            ))
        });
        check_overlaps(doc, items.iter().map(|p| &p.detection))?;

        let mut plan = Plan::default();
        let mut by_turn: BTreeMap<usize, Vec<(&PlannedDetection, StrategyKind)>> = BTreeMap::new();
        for p in items {
            let kind = match p.strategy_override {
                Some(k) => k,
                None => select_strategy(&p.detection, &self.cfg.matrix)?,
            };
            if p.detection.is_metadata() {
                let a = self.span_action(&p.detection, kind, vault, &mut plan.events);
                plan.actions.push(a);
            } else {
                if p.detection.span.turn_index >= doc.turns.len() || !p.detection.span.round_trips(doc) {
                    let d = &p.detection;
                    return Err(Error::SpanMismatch {
                        doc_id: d.span.doc_id.clone(),
                        turn: d.span.turn_index,
                        start: d.span.start,
                        end: d.span.end,
                        expected: d.span.surface.clone(),
                        found: doc.slice(d.span.turn_index, d.span.start, d.span.end).unwrap_or_default().to_string(),
                    });
                }
                by_turn.entry(p.detection.span.turn_index).or_default().push((p, kind));
            }
        }
        let metadata_actions = std::mem::take(&mut plan.actions);

        for (turn, entries) in by_turn {
            let (rewrites, spans): (Vec<_>, Vec<_>) =
                entries.into_iter().partition(|(p, kind)| self.wants_model_rewrite(doc, p, *kind));
            let mut turn_actions: Vec<AnonymizationAction> = spans
                .iter()
                .map(|(p, kind)| self.span_action(&p.detection, *kind, vault, &mut plan.events))
                .collect();
            if !rewrites.is_empty() {
                let outcome = match self.client {
                    Some(client) => {
                        let original = &doc.turns[turn].text;
                        let intermediate = apply_span_actions(original, &turn_actions);
                        let targets: Vec<&str> = rewrites.iter().map(|(p, _)| p.detection.span.surface.as_str()).collect();
                        let mut forbidden = targets.clone();
                        forbidden.extend(
                            spans
                                .iter()
                                .filter(|(p, _)| matches!(p.detection.risk, Some(RiskClass::Direct | RiskClass::StrongIndirect)))
                                .map(|(p, _)| p.detection.span.surface.as_str()),
                        );
                        rewrite_contextual(
                            &intermediate,
                            &targets,
                            &forbidden,
                            client,
                            &self.cfg.rewrite,
                            rewrites[0].1.technique,
                            &doc.language_tag,
                        )
                        .map_err(|e| e.to_string())
                    }
                    None => Err("no language model configured".to_string()),
                };
                match outcome {
                    Ok(text) => {
                        let original = doc.turns[turn].text.clone();
                        turn_actions.push(AnonymizationAction {
                            detection_id: rewrites
                                .iter()
                                .map(|(p, _)| p.detection.detection_id.as_str())
                                .collect::<Vec<_>>()
                                .join("+"),
                            strategy: rewrites[0].1,
                            replacement: text,
                            original_surface: original.clone(),
                            applied_span: TextSpan {
                                doc_id: doc.doc_id.clone(),
                                turn_index: turn,
                                start: 0,
                                end: char_len(&original),
                                surface: original,
                            },
                            scope: ActionScope::Turn,
                        });
                    }
                    Err(why) => {
                        plan.events.push(PlanEvent {
                            doc_id: doc.doc_id.clone(),
                            turn,
                            detection_ids: rewrites.iter().map(|(p, _)| p.detection.detection_id.clone()).collect(),
                            kind: EventKind::RewriteFallback,
                            detail: why,
                        });
                        for (p, _) in &rewrites {
                            let a = substitute(&p.detection, vault, self.cfg);
                            let a = self.post_check(&p.detection, a, &mut plan.events);
                            turn_actions.push(a);
                        }
                        turn_actions.sort_by_key(|a| a.applied_span.start);
                    }
                }
            }
            plan.actions.extend(turn_actions);
        }
        plan.actions.extend(metadata_actions);
        Ok(plan)
    }

    /// Plan every document, in doc_id order.
    pub fn plan_corpus(&self, corpus: &[TranscriptDocument], planned: &[PlannedDetection], vault: &mut Vault) -> Result<Plan> {
        let mut by_doc: BTreeMap<&str, Vec<PlannedDetection>> = BTreeMap::new();
        for p in planned {
            by_doc.entry(p.detection.span.doc_id.as_str()).or_default().push(p.clone());
        }
        for id in by_doc.keys() {
            if !corpus.iter().any(|d| d.doc_id == *id) {
                return Err(Error::NotFound(format!("detections refer to unknown document {id}")));
            }
        }
        let mut docs: Vec<&TranscriptDocument> = corpus.iter().collect();
        docs.sort_by(|a, b| a.doc_id.cmp(&b.doc_id));
        let mut plan = Plan::default();
        for doc in docs {
            let Some(items) = by_doc.get(doc.doc_id.as_str()) else {
                continue;
            };
            let p = self.plan_document(doc, items, vault)?;
            plan.actions.extend(p.actions);
            plan.events.extend(p.events);
        }
        Ok(plan)
    }
}

fn check_overlaps<'d>(doc: &TranscriptDocument, dets: impl Iterator<Item = &'d Detection>) -> Result<()> {
    let mut last: BTreeMap<usize, (usize, usize)> = BTreeMap::new();
    for d in dets.filter(|d| !d.is_metadata()) {
        if let Some(&(s, e)) = last.get(&d.span.turn_index) {
            if d.span.start < e {
                return Err(Error::Overlap {
                    doc_id: doc.doc_id.clone(),
                    turn: d.span.turn_index,
                    a_start: s,
                    a_end: e,
                    b_start: d.span.start,
                    b_end: d.span.end,
                });
            }
        }
        last.insert(d.span.turn_index, (d.span.start, d.span.end));
    }
    Ok(())
}

/// Splice span replacements into `text`, right to left so earlier offsets
/// stay valid. Actions must be non-overlapping and sorted by start.
fn apply_span_actions(text: &str, actions: &[AnonymizationAction]) -> String {
    let mut out = text.to_string();
    for a in actions.iter().rev().filter(|a| a.scope == ActionScope::Span) {
        let idx = crate::text::CharIndex::new(&out);
        let (Some(b0), Some(b1)) = (idx.byte_of(a.applied_span.start), idx.byte_of(a.applied_span.end)) else {
            continue;
        };
        out.replace_range(b0..b1, &a.replacement);
    }
    out
}

fn metadata_key(detection_id: &str) -> Option<&str> {
    detection_id.rsplit_once(":meta:").map(|(_, k)| k)
}

/// Apply a document's actions. A turn-scope action replaces its whole turn
/// (span actions of that turn are already folded into its text); span
/// actions are spliced right to left; metadata actions overwrite the
/// metadata value they came from.
pub fn apply_plan(doc: &TranscriptDocument, actions: &[AnonymizationAction]) -> Result<TranscriptDocument> {
    let mut out = doc.clone();
    let mut by_turn: BTreeMap<usize, Vec<&AnonymizationAction>> = BTreeMap::new();
    for a in actions {
        if a.applied_span.doc_id != doc.doc_id {
            return Err(Error::NotFound(format!(
                "action {} targets document {}, not {}",
                a.detection_id, a.applied_span.doc_id, doc.doc_id
            )));
        }
        match a.scope {
            ActionScope::Metadata => {
                if let Some(key) = metadata_key(&a.detection_id) {
                    if let Some(v) = out.metadata.get_mut(key) {
                        *v = a.replacement.clone();
                    }
                }
            }
            _ => by_turn.entry(a.applied_span.turn_index).or_default().push(a),
        }
    }
    for (turn, mut acts) in by_turn {
        let Some(t) = out.turns.get_mut(turn) else {
            return Err(Error::NotFound(format!("turn {turn} of {}", doc.doc_id)));
        };
        let turn_actions: Vec<_> = acts.iter().filter(|a| a.scope == ActionScope::Turn).collect();
        if let Some(first) = turn_actions.first() {
            if turn_actions.len() > 1 {
                return Err(Error::Overlap {
                    doc_id: doc.doc_id.clone(),
                    turn,
                    a_start: 0,
                    a_end: first.applied_span.end,
                    b_start: 0,
                    b_end: turn_actions[1].applied_span.end,
                });
            }
            if normalize_ws(&first.original_surface) != normalize_ws(&t.text) {
                return Err(mismatch(doc, first, &t.text));
            }
            t.text = first.replacement.clone();
            continue;
        }
        acts.sort_by_key(|a| (a.applied_span.start, a.applied_span.end));
        for w in acts.windows(2) {
            if w[1].applied_span.start < w[0].applied_span.end {
                return Err(Error::Overlap {
                    doc_id: doc.doc_id.clone(),
                    turn,
                    a_start: w[0].applied_span.start,
                    a_end: w[0].applied_span.end,
                    b_start: w[1].applied_span.start,
                    b_end: w[1].applied_span.end,
                });
            }
        }
        for a in &acts {
            let found = slice_chars(&t.text, a.applied_span.start, a.applied_span.end);
            if found != Some(a.original_surface.as_str()) {
                return Err(mismatch(doc, a, found.unwrap_or_default()));
            }
        }
        let owned: Vec<AnonymizationAction> = acts.into_iter().cloned().collect();
        t.text = apply_span_actions(&t.text, &owned);
    }
    Ok(out)
}

fn mismatch(doc: &TranscriptDocument, a: &AnonymizationAction, found: &str) -> Error {
    Error::SpanMismatch {
        doc_id: doc.doc_id.clone(),
        turn: a.applied_span.turn_index,
        start: a.applied_span.start,
        end: a.applied_span.end,
        expected: a.original_surface.clone(),
        found: found.to_string(),
    }
}

/// Apply a corpus plan. Documents keep their input order; the audit log
/// follows documents in that order and actions in plan order.
pub fn apply_corpus(
    corpus: &[TranscriptDocument],
    actions: &[AnonymizationAction],
) -> Result<(Vec<TranscriptDocument>, Vec<AuditRecord>)> {
    let mut by_doc: BTreeMap<&str, Vec<AnonymizationAction>> = BTreeMap::new();
    for a in actions {
        by_doc.entry(a.applied_span.doc_id.as_str()).or_default().push(a.clone());
    }
    let mut docs = Vec::with_capacity(corpus.len());
    let mut audit = Vec::with_capacity(actions.len());
    for doc in corpus {
        let acts = by_doc.remove(doc.doc_id.as_str()).unwrap_or_default();
        docs.push(apply_plan(doc, &acts)?);
        audit.extend(acts.iter().map(AuditRecord::from));
    }
    if let Some(id) = by_doc.keys().next() {
        return Err(Error::NotFound(format!("plan refers to unknown document {id}")));
    }
    Ok((docs, audit))
}

/// A high-risk surface still present after anonymization.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Residual {
    pub doc_id: String,
    pub detection_id: String,
    pub surface: String,
}

/// Every accepted Direct or StrongIndirect surface whose whitespace-normalized
/// form still occurs in its anonymized document.
pub fn residual_sweep(anonymized: &[TranscriptDocument], accepted: &[PlannedDetection]) -> Vec<Residual> {
    let texts: BTreeMap<&str, String> = anonymized
        .iter()
        .map(|d| {
            let joined = d.turns.iter().map(|t| normalize_ws(&t.text)).collect::<Vec<_>>().join("\n");
            (d.doc_id.as_str(), joined)
        })
        .collect();
    accepted
        .iter()
        .map(|p| &p.detection)
        .filter(|d| matches!(d.risk, Some(RiskClass::Direct | RiskClass::StrongIndirect)))
        .filter(|d| {
            let s = normalize_ws(&d.span.surface);
            !s.is_empty() && texts.get(d.span.doc_id.as_str()).is_some_and(|t| t.contains(&s))
        })
        .map(|d| Residual {
            doc_id: d.span.doc_id.clone(),
            detection_id: d.detection_id.clone(),
            surface: d.span.surface.clone(),
        })
        .collect()
}
