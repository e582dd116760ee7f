//! In-browser demo: find identifiers in pasted transcript text, anonymize
//! it, and score the detections against a hand-written reference list.
//!
//! Runs entirely in the page with the rule pack and a user gazetteer. No
//! model is reachable from here, so spans routed to context-aware rewriting
//! are substituted instead.
//!
//! Every exported function returns a JSON string or throws a message.

use serde::Serialize;
use wasm_bindgen::prelude::*;

use sfaa_core::anonymization::{
    apply_plan, resolve_verdicts, select_strategy, AnonymizationConfig, Anonymizer, CorpusStats,
    GeneralizationHierarchy, Vault,
};
use sfaa_core::classification::{classify_all, escalate_combinations, RiskPolicy};
use sfaa_core::detection::{detect_dictionary, detect_rules, merge_detections, CompiledRules, Gazetteer, GazetteerEntry};
use sfaa_core::evaluation::{match_spans, metrics, Counts, MatchRule};
use sfaa_core::model::{Detection, GoldAnnotation, GoldAnnotationSet, SpeakerRole, TextSpan, TranscriptDocument};
use sfaa_core::taxonomy::Taxonomy;

const DOC_ID: &str = "demo";

/// One non-empty line per turn.
fn document(text: &str) -> TranscriptDocument {
    let mut doc = TranscriptDocument::new(DOC_ID);
    for line in text.lines().map(str::trim).filter(|l| !l.is_empty()) {
        doc.push_turn(SpeakerRole::Participant, line);
    }
    doc
}

/// Parse `subtype: surface` lines; blank lines and `#` comments are skipped.
fn entries(list: &str, taxonomy: &Taxonomy) -> Result<Vec<(String, String)>, String> {
    let mut out = Vec::new();
    for (i, line) in list.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (subtype, surface) = line
            .split_once(':')
            .ok_or_else(|| format!("line {}: expected `subtype: text`", i + 1))?;
        let (subtype, surface) = (subtype.trim(), surface.trim());
        if !taxonomy.contains(subtype) {
            return Err(format!("line {}: unknown subtype {subtype:?}", i + 1));
        }
        if surface.is_empty() {
            return Err(format!("line {}: empty text", i + 1));
        }
        out.push((subtype.to_string(), surface.to_string()));
    }
    Ok(out)
}

/// Rules plus gazetteer, merged, classified and escalated.
fn detect(doc: &TranscriptDocument, gazetteer: &str) -> Result<Vec<Detection>, String> {
    let taxonomy = Taxonomy::default();
    let policy = RiskPolicy::default();
    let mut gaz = Gazetteer::default();
    for (subtype, surface) in entries(gazetteer, &taxonomy)? {
        gaz.insert(&subtype, GazetteerEntry::Plain(surface));
    }
    let gaz = gaz.compile(&taxonomy).map_err(|e| e.to_string())?;
    let rules = detect_rules(doc, &CompiledRules::default());
    let dict = detect_dictionary(doc, &gaz);
    let merged = merge_detections(&[rules, dict], &policy);
    let classified = classify_all(&merged, &policy).map_err(|e| e.to_string())?;
    Ok(escalate_combinations(&classified, &policy))
}

#[derive(Debug, Serialize)]
struct Found {
    turn: usize,
    start: usize,
    end: usize,
    surface: String,
    subtype: String,
    risk: String,
    strategy: String,
    technique: String,
}

pub fn analyze_json(text: &str, gazetteer: &str) -> Result<String, String> {
    let doc = document(text);
    let matrix = AnonymizationConfig::default().matrix;
    let found = detect(&doc, gazetteer)?
        .into_iter()
        .map(|d| {
            let kind = select_strategy(&d, &matrix).map_err(|e| e.to_string())?;
            Ok(Found {
                turn: d.span.turn_index,
                start: d.span.start,
                end: d.span.end,
                surface: d.span.surface,
                subtype: d.category.subtype,
                risk: d.risk.map(|r| r.to_string()).unwrap_or_default(),
                strategy: format!("{:?}", kind.strategy),
                technique: format!("{:?}", kind.technique),
            })
        })
        .collect::<Result<Vec<_>, String>>()?;
    serde_json::to_string(&found).map_err(|e| e.to_string())
}

#[derive(Debug, Serialize)]
struct Replaced {
    original: String,
    replacement: String,
    strategy: String,
}

#[derive(Debug, Serialize)]
struct Anonymized {
    text: String,
    actions: Vec<Replaced>,
}

pub fn anonymize_json(text: &str, gazetteer: &str, key: &str, preserve_titles: bool) -> Result<String, String> {
    if key.is_empty() {
        return Err("a vault key is required".into());
    }
    let doc = document(text);
    let detections = detect(&doc, gazetteer)?;
    let planned = resolve_verdicts(&detections, &[], true).map_err(|e| e.to_string())?;
    let cfg = AnonymizationConfig {
        preserve_titles,
        ..AnonymizationConfig::default()
    };
    let hierarchy = GeneralizationHierarchy::default();
    let stats = CorpusStats::compute(std::slice::from_ref(&doc), &detections);
    let mut vault = Vault::new(key.as_bytes());
    let plan = Anonymizer::new(&cfg, &hierarchy, None, &stats)
        .and_then(|a| a.plan_document(&doc, &planned, &mut vault))
        .map_err(|e| e.to_string())?;
    let out = apply_plan(&doc, &plan.actions).map_err(|e| e.to_string())?;
    let result = Anonymized {
        text: out.turns.iter().map(|t| t.text.as_str()).collect::<Vec<_>>().join("\n"),
        actions: plan
            .actions
            .into_iter()
            .map(|a| Replaced {
                original: a.original_surface,
                replacement: a.replacement,
                strategy: format!("{:?}", a.strategy.technique),
            })
            .collect(),
    };
    serde_json::to_string(&result).map_err(|e| e.to_string())
}

/// Every occurrence of each reference surface becomes a gold span.
fn reference_set(doc: &TranscriptDocument, reference: &str) -> Result<GoldAnnotationSet, String> {
    let taxonomy = Taxonomy::default();
    let policy = RiskPolicy::default();
    let mut gold = Vec::new();
    for (subtype, surface) in entries(reference, &taxonomy)? {
        let category = taxonomy.category(&subtype).map_err(|e| e.to_string())?;
        let risk = policy.risk_of(&subtype).ok_or_else(|| format!("no risk class for {subtype}"))?;
        let width = surface.chars().count();
        let mut hits = 0;
        for turn in &doc.turns {
            for (byte, _) in turn.text.match_indices(surface.as_str()) {
                let start = turn.text[..byte].chars().count();
                gold.push(GoldAnnotation {
                    span: TextSpan {
                        doc_id: DOC_ID.into(),
                        turn_index: turn.index,
                        start,
                        end: start + width,
                        surface: surface.clone(),
                    },
                    category: category.clone(),
                    risk,
                });
                hits += 1;
            }
        }
        if hits == 0 {
            return Err(format!("reference text {surface:?} does not occur in the transcript"));
        }
    }
    let mut set = GoldAnnotationSet::default();
    set.docs.insert(DOC_ID.into(), gold);
    Ok(set)
}

#[derive(Debug, Serialize)]
struct Score {
    tp: usize,
    fp: usize,
    #[serde(rename = "fn")]
    fn_: usize,
    precision: f64,
    recall: f64,
    accuracy: f64,
    missed: Vec<String>,
    spurious: Vec<String>,
}

pub fn score_json(text: &str, gazetteer: &str, reference: &str) -> Result<String, String> {
    let doc = document(text);
    let detections = detect(&doc, gazetteer)?;
    let gold = reference_set(&doc, reference)?;
    let result = match_spans(&detections, &gold, &MatchRule::default());
    let c = Counts::of(&result);
    let m = metrics(c).map_err(|e| e.to_string())?;
    let score = Score {
        tp: c.tp,
        fp: c.fp,
        fn_: c.fn_,
        precision: m.precision,
        recall: m.recall,
        accuracy: m.accuracy,
        missed: result.false_negatives.iter().map(|g| g.span.surface.clone()).collect(),
        spurious: result.false_positives.iter().map(|d| d.span.surface.clone()).collect(),
    };
    serde_json::to_string(&score).map_err(|e| e.to_string())
}

/// Detected spans with risk class and proposed strategy.
#[wasm_bindgen]
pub fn analyze(text: &str, gazetteer: &str) -> Result<String, JsValue> {
    analyze_json(text, gazetteer).map_err(|e| JsValue::from_str(&e))
}

/// Anonymized text with every detection accepted.
#[wasm_bindgen]
pub fn anonymize(text: &str, gazetteer: &str, key: &str, preserve_titles: bool) -> Result<String, JsValue> {
    anonymize_json(text, gazetteer, key, preserve_titles).map_err(|e| JsValue::from_str(&e))
}

/// Precision, recall and accuracy against `subtype: text` reference lines.
#[wasm_bindgen]
pub fn score(text: &str, gazetteer: &str, reference: &str) -> Result<String, JsValue> {
    score_json(text, gazetteer, reference).map_err(|e| JsValue::from_str(&e))
}
