//! Coalescing detections from several backends into one non-overlapping set.

use std::cmp::Ordering;
use std::collections::HashMap;

use crate::classification::RiskPolicy;
use crate::model::{Detection, RiskClass};

fn merge_risk(d: &Detection, policy: &RiskPolicy) -> RiskClass {
    policy
        .risk_of(&d.category.subtype)
        .or(d.risk)
        .unwrap_or(RiskClass::WeakIndirect)
}

/// Ordering where the preferred detection sorts first: higher risk, then
/// longer span, then source priority (Human > Rule > Dictionary > Llm). The
/// remaining keys only make the order total.
fn preference(a: &Detection, b: &Detection, policy: &RiskPolicy) -> Ordering {
    merge_risk(b, policy)
        .cmp(&merge_risk(a, policy))
        .then_with(|| b.span.len().cmp(&a.span.len()))
        .then_with(|| b.source.priority().cmp(&a.source.priority()))
        .then_with(|| a.span.doc_id.cmp(&b.span.doc_id))
        .then_with(|| a.span.turn_index.cmp(&b.span.turn_index))
        .then_with(|| a.span.start.cmp(&b.span.start))
        .then_with(|| a.category.cmp(&b.category))
        .then_with(|| a.detection_id.cmp(&b.detection_id))
}

/// Overlapping detections (same turn, intersecting offsets) collapse to the
/// preferred one; the result is sorted by `(doc, turn, start)`. Metadata
/// detections have empty spans and always pass through.
pub fn merge_detections(sets: &[Vec<Detection>], policy: &RiskPolicy) -> Vec<Detection> {
    let mut all: Vec<&Detection> = sets.iter().flatten().collect();
    all.sort_by(|a, b| preference(a, b, policy));

    let mut kept: Vec<Detection> = Vec::new();
    let mut taken: HashMap<(&str, usize), Vec<(usize, usize)>> = HashMap::new();
    for d in all {
        if d.is_metadata() {
            if !kept.iter().any(|k| k.detection_id == d.detection_id) {
                kept.push(d.clone());
            }
            continue;
        }
        let slots = taken.entry((d.span.doc_id.as_str(), d.span.turn_index)).or_default();
        if slots.iter().any(|&(s, e)| d.span.start < e && s < d.span.end) {
            continue;
        }
        slots.push((d.span.start, d.span.end));
        kept.push(d.clone());
    }
    kept.sort_by(|a, b| {
        (&a.span.doc_id, a.span.turn_index, a.span.start, a.span.end, &a.detection_id).cmp(&(
            &b.span.doc_id,
            b.span.turn_index,
            b.span.start,
            b.span.end,
            &b.detection_id,
        ))
    });
    kept
}
