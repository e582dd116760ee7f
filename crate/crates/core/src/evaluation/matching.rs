//! One-to-one matching of detections against reference spans.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::model::{Detection, GoldAnnotation, GoldAnnotationSet, IdentifierCategory, TextSpan};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MatchMode {
    Exact,
    /// Pairs need an offset Jaccard index of at least `min_jaccard`.
    Overlap { min_jaccard: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MatchRule {
    pub mode: MatchMode,
    pub require_category_match: bool,
}

impl Default for MatchRule {
    fn default() -> Self {
        MatchRule {
            mode: MatchMode::Overlap { min_jaccard: 0.5 },
            require_category_match: true,
        }
    }
}

/// Intersection over union of two character intervals in the same turn.
pub fn jaccard(a: &TextSpan, b: &TextSpan) -> f64 {
    if a.doc_id != b.doc_id || a.turn_index != b.turn_index {
        return 0.0;
    }
    let inter = a.end.min(b.end).saturating_sub(a.start.max(b.start));
    let union = a.end.max(b.end) - a.start.min(b.start);
    if union == 0 {
        return 0.0;
    }
    inter as f64 / union as f64
}

impl MatchRule {
    /// Score of a candidate pair, or `None` if the pair is not admissible.
    pub fn score(&self, d: &TextSpan, dc: &IdentifierCategory, g: &TextSpan, gc: &IdentifierCategory) -> Option<f64> {
        if self.require_category_match && dc != gc {
            return None;
        }
        match self.mode {
            MatchMode::Exact => {
                (d.doc_id == g.doc_id && d.turn_index == g.turn_index && d.start == g.start && d.end == g.end).then_some(1.0)
            }
            MatchMode::Overlap { min_jaccard } => {
                let j = jaccard(d, g);
                (j > 0.0 && j >= min_jaccard).then_some(j)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchedPair {
    pub detection: Detection,
    pub gold: GoldAnnotation,
    pub jaccard: f64,
}

/// True positives with their witnesses, unmatched detections (wrongly
/// identified) and unmatched reference spans (missed).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MatchResult {
    pub matched: Vec<MatchedPair>,
    pub false_positives: Vec<Detection>,
    pub false_negatives: Vec<GoldAnnotation>,
}

fn span_key(s: &TextSpan) -> (&str, usize, usize, usize) {
    (s.doc_id.as_str(), s.turn_index, s.start, s.end)
}

/// Greedy matching: admissible pairs are taken in order of decreasing
/// Jaccard index, each side used at most once. Ties break on document
/// position, so the result does not depend on input order. Metadata
/// detections carry no text span and are left out.
pub fn match_spans(detections: &[Detection], gold: &GoldAnnotationSet, rule: &MatchRule) -> MatchResult {
    let mut dets: Vec<&Detection> = detections.iter().filter(|d| !d.is_metadata()).collect();
    dets.sort_by(|a, b| {
        span_key(&a.span)
            .cmp(&span_key(&b.span))
            .then_with(|| a.category.cmp(&b.category))
            .then_with(|| a.detection_id.cmp(&b.detection_id))
    });
    let mut golds: Vec<&GoldAnnotation> = gold.docs.values().flatten().collect();
    golds.sort_by(|a, b| span_key(&a.span).cmp(&span_key(&b.span)).then_with(|| a.category.cmp(&b.category)));

    let mut candidates: Vec<(f64, usize, usize)> = Vec::new();
    for (i, d) in dets.iter().enumerate() {
        for (j, g) in golds.iter().enumerate() {
            if let Some(s) = rule.score(&d.span, &d.category, &g.span, &g.category) {
                candidates.push((s, i, j));
            }
        }
    }
    candidates.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap_or(Ordering::Equal).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));

    let mut det_used = vec![false; dets.len()];
    let mut gold_used = vec![false; golds.len()];
    let mut out = MatchResult::default();
    for (s, i, j) in candidates {
        if det_used[i] || gold_used[j] {
            continue;
        }
        det_used[i] = true;
        gold_used[j] = true;
        out.matched.push(MatchedPair {
            detection: dets[i].clone(),
            gold: golds[j].clone(),
            jaccard: s,
        });
    }
    out.matched
        .sort_by(|a, b| span_key(&a.gold.span).cmp(&span_key(&b.gold.span)));
    out.false_positives = dets.iter().zip(&det_used).filter(|(_, u)| !**u).map(|(d, _)| (*d).clone()).collect();
    out.false_negatives = golds.iter().zip(&gold_used).filter(|(_, u)| !**u).map(|(g, _)| (*g).clone()).collect();
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{DetectionSource, IdentifierGroup, RiskClass};

    fn span(start: usize, end: usize) -> TextSpan {
        TextSpan {
            doc_id: "d".into(),
            turn_index: 0,
            start,
            end,
            surface: "x".repeat(end - start),
        }
    }

    fn cat() -> IdentifierCategory {
        IdentifierCategory::new(IdentifierGroup::Direct, "person-name")
    }

    fn det(start: usize, end: usize) -> Detection {
        Detection::new(span(start, end), cat(), DetectionSource::Rule)
    }

    fn gold(spans: &[(usize, usize)]) -> GoldAnnotationSet {
        let mut set = GoldAnnotationSet::default();
        set.docs.insert(
            "d".into(),
            spans
                .iter()
                .map(|&(s, e)| GoldAnnotation {
                    span: span(s, e),
                    category: cat(),
                    risk: RiskClass::Direct,
                })
                .collect(),
        );
        set
    }

    #[test]
    fn identical_span_is_one_true_positive() {
        let r = match_spans(&[det(0, 5)], &gold(&[(0, 5)]), &MatchRule::default());
        assert_eq!((r.matched.len(), r.false_positives.len(), r.false_negatives.len()), (1, 0, 0));
    }

    #[test]
    fn stray_detection_is_false_positive() {
        let r = match_spans(&[det(20, 25)], &gold(&[(0, 5)]), &MatchRule::default());
        assert_eq!((r.matched.len(), r.false_positives.len(), r.false_negatives.len()), (0, 1, 1));
    }

    #[test]
    fn three_gold_two_exact() {
        let r = match_spans(&[det(0, 5), det(10, 15)], &gold(&[(0, 5), (10, 15), (20, 25)]), &MatchRule::default());
        assert_eq!((r.matched.len(), r.false_positives.len(), r.false_negatives.len()), (2, 0, 1));
    }

    #[test]
    fn jaccard_threshold_and_category() {
        // [0,10) vs [5,10): 5/10 = 0.5, admitted at the default threshold.
        let r = match_spans(&[det(5, 10)], &gold(&[(0, 10)]), &MatchRule::default());
        assert_eq!(r.matched.len(), 1);
        assert_eq!(r.matched[0].jaccard, 0.5);
        let r = match_spans(&[det(6, 10)], &gold(&[(0, 10)]), &MatchRule::default());
        assert_eq!(r.matched.len(), 0);
        let mut other = det(0, 10);
        other.category = IdentifierCategory::new(IdentifierGroup::Direct, "email");
        assert_eq!(match_spans(&[other.clone()], &gold(&[(0, 10)]), &MatchRule::default()).matched.len(), 0);
        let lax = MatchRule {
            require_category_match: false,
            ..Default::default()
        };
        assert_eq!(match_spans(&[other], &gold(&[(0, 10)]), &lax).matched.len(), 1);
    }

    #[test]
    fn exact_mode_needs_equal_offsets() {
        let exact = MatchRule {
            mode: MatchMode::Exact,
            ..Default::default()
        };
        assert_eq!(match_spans(&[det(0, 9)], &gold(&[(0, 10)]), &exact).matched.len(), 0);
        assert_eq!(match_spans(&[det(0, 10)], &gold(&[(0, 10)]), &exact).matched.len(), 1);
    }
}
