//! Report assembly: identification counts per backend and case, per-class
//! classification accuracy, per-strategy scores and backend comparison.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::impact::ImpactReport;
use super::matching::{match_spans, MatchRule, MatchedPair};
use super::metrics::{metrics, Counts, Metrics, Ratio};
use crate::anonymization::StrategyMatrix;
use crate::model::{Detection, GoldAnnotationSet, RiskClass, Strategy, TranscriptDocument};

/// Case label used for documents without one, and for the all-documents row.
pub const DEFAULT_CASE: &str = "default";
pub const ALL_CASES: &str = "all";

/// A rate with its exact numerator and denominator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rate {
    pub num: usize,
    pub den: usize,
    /// `None` when the denominator is zero.
    pub pct: Option<f64>,
}

impl From<Ratio> for Rate {
    fn from(r: Ratio) -> Self {
        Rate {
            num: r.num,
            den: r.den,
            pct: r.percent(),
        }
    }
}

/// Identified / wrongly tagged / missed items, averaged per transcript.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentificationRow {
    pub backend: String,
    pub case_label: String,
    pub documents: usize,
    pub counts: Counts,
    /// Mean TP + FP per transcript.
    pub identified: f64,
    /// Mean FP per transcript.
    pub wrong: f64,
    /// Mean FN per transcript.
    pub missed: f64,
    /// FP over reported items.
    pub wrong_rate: Rate,
    /// FN over reference items.
    pub missed_rate: Rate,
    /// FP over reference items, the alternative denominator.
    pub wrong_per_gold: Rate,
    /// FN over reported items, the alternative denominator.
    pub missed_per_reported: Rate,
    /// `None` when there is nothing to score.
    pub metrics: Option<Metrics>,
}

/// Aggregate per-document counts. An empty `per_doc` or all-zero counts give
/// a row whose metrics are `None`.
pub fn identification_report(per_doc: &[Counts], backend: &str, case_label: &str) -> IdentificationRow {
    let n = per_doc.len();
    let total: Counts = per_doc.iter().copied().sum();
    let mean = |x: usize| if n == 0 { 0.0 } else { x as f64 / n as f64 };
    IdentificationRow {
        backend: backend.to_string(),
        case_label: case_label.to_string(),
        documents: n,
        counts: total,
        identified: mean(total.reported()),
        wrong: mean(total.fp),
        missed: mean(total.fn_),
        wrong_rate: Ratio::new(total.fp, total.reported()).into(),
        missed_rate: Ratio::new(total.fn_, total.gold()).into(),
        wrong_per_gold: Ratio::new(total.fp, total.gold()).into(),
        missed_per_reported: Ratio::new(total.fn_, total.reported()).into(),
        metrics: metrics(total).ok(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassRow {
    pub risk: RiskClass,
    /// Matched items whose reference class is `risk`.
    pub gold: usize,
    /// Of those, items predicted as `risk`.
    pub correct: usize,
    pub accuracy_pct: Option<f64>,
    pub error_pct: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCell {
    pub gold: RiskClass,
    /// `None` for a detection that was never classified.
    pub predicted: Option<RiskClass>,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationReport {
    pub classes: Vec<ClassRow>,
    pub confusion: Vec<ConfusionCell>,
}

/// Per reference class, the share of matched items predicted as that class.
pub fn classification_report(pairs: &[MatchedPair]) -> ClassificationReport {
    let mut tally: BTreeMap<(RiskClass, Option<RiskClass>), usize> = BTreeMap::new();
    for p in pairs {
        *tally.entry((p.gold.risk, p.detection.risk)).or_default() += 1;
    }
    let classes = [RiskClass::Direct, RiskClass::StrongIndirect, RiskClass::WeakIndirect]
        .into_iter()
        .map(|c| {
            let gold: usize = tally.iter().filter(|((g, _), _)| *g == c).map(|(_, n)| n).sum();
            let correct = tally.get(&(c, Some(c))).copied().unwrap_or(0);
            let acc = Ratio::new(correct, gold).percent();
            ClassRow {
                risk: c,
                gold,
                correct,
                accuracy_pct: acc,
                error_pct: acc.map(|a| 100.0 - a),
            }
        })
        .collect();
    let confusion = tally
        .into_iter()
        .map(|((gold, predicted), count)| ConfusionCell { gold, predicted, count })
        .collect();
    ClassificationReport { classes, confusion }
}

/// Everything measured for one detection backend.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackendEvaluation {
    pub backend: String,
    /// One row per case label, then the all-documents row.
    pub rows: Vec<IdentificationRow>,
    pub classification: ClassificationReport,
}

impl BackendEvaluation {
    pub fn row(&self, case_label: &str) -> Option<&IdentificationRow> {
        self.rows.iter().find(|r| r.case_label == case_label)
    }
}

fn case_of(doc: &TranscriptDocument) -> &str {
    if doc.case_label.is_empty() {
        DEFAULT_CASE
    } else {
        &doc.case_label
    }
}

fn gold_for(gold: &GoldAnnotationSet, doc_id: &str) -> GoldAnnotationSet {
    let mut one = GoldAnnotationSet::default();
    if let Some(v) = gold.docs.get(doc_id) {
        one.docs.insert(doc_id.to_string(), v.clone());
    }
    one
}

/// Score one backend's detections against the reference set, per document,
/// grouped by case label.
pub fn evaluate_backend(
    backend: &str,
    corpus: &[TranscriptDocument],
    detections: &[Detection],
    gold: &GoldAnnotationSet,
    rule: &MatchRule,
) -> BackendEvaluation {
    let mut by_doc: BTreeMap<&str, Vec<Detection>> = BTreeMap::new();
    for d in detections {
        by_doc.entry(d.span.doc_id.as_str()).or_default().push(d.clone());
    }
    let mut per_case: BTreeMap<&str, Vec<Counts>> = BTreeMap::new();
    let mut all = Vec::new();
    let mut pairs = Vec::new();
    for doc in corpus {
        let dets = by_doc.get(doc.doc_id.as_str()).map(Vec::as_slice).unwrap_or(&[]);
        let m = match_spans(dets, &gold_for(gold, &doc.doc_id), rule);
        let c = Counts::of(&m);
        per_case.entry(case_of(doc)).or_default().push(c);
        all.push(c);
        pairs.extend(m.matched);
    }
    let mut rows: Vec<IdentificationRow> = per_case
        .iter()
        .map(|(case, counts)| identification_report(counts, backend, case))
        .collect();
    rows.push(identification_report(&all, backend, ALL_CASES));
    BackendEvaluation {
        backend: backend.to_string(),
        rows,
        classification: classification_report(&pairs),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategyRow {
    pub strategy: Strategy,
    pub counts: Counts,
    pub metrics: Option<Metrics>,
}

/// Score each strategy on the detections routed to it against the reference
/// items the matrix would route to it.
pub fn strategy_breakdown(
    routed: &[(Detection, Strategy)],
    gold: &GoldAnnotationSet,
    matrix: &StrategyMatrix,
    rule: &MatchRule,
) -> Vec<StrategyRow> {
    [
        Strategy::RuleBasedSubstitution,
        Strategy::ContextAwareRewriting,
        Strategy::Generalization,
        Strategy::Suppression,
    ]
    .into_iter()
    .map(|s| {
        let dets: Vec<Detection> = routed.iter().filter(|(_, x)| *x == s).map(|(d, _)| d.clone()).collect();
        let mut g = GoldAnnotationSet::default();
        for (doc, anns) in &gold.docs {
            let kept: Vec<_> = anns
                .iter()
                .filter(|a| matrix.lookup(a.risk, &a.category.subtype).strategy == s)
                .cloned()
                .collect();
            if !kept.is_empty() {
                g.docs.insert(doc.clone(), kept);
            }
        }
        let counts = Counts::of(&match_spans(&dets, &g, rule));
        StrategyRow {
            strategy: s,
            counts,
            metrics: metrics(counts).ok(),
        }
    })
    .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonColumn {
    pub backend: String,
    pub case_label: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub metric: String,
    /// One cell per column; `None` renders as "n/a".
    pub values: Vec<Option<f64>>,
}

/// Metrics down the side, one column per (backend, case label).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonTable {
    pub columns: Vec<ComparisonColumn>,
    pub rows: Vec<ComparisonRow>,
}

type Extractor = fn(&IdentificationRow) -> Option<f64>;

const COMPARED: [(&str, Extractor); 8] = [
    ("identified", |r| Some(r.identified)),
    ("wrong", |r| Some(r.wrong)),
    ("missed", |r| Some(r.missed)),
    ("wrong_rate_pct", |r| r.wrong_rate.pct),
    ("missed_rate_pct", |r| r.missed_rate.pct),
    ("precision", |r| r.metrics.map(|m| m.precision)),
    ("recall", |r| r.metrics.map(|m| m.recall)),
    ("accuracy", |r| r.metrics.map(|m| m.accuracy)),
];

/// Align backends side by side. Case labels are the union over backends,
/// excluding the all-documents row unless it is the only one.
pub fn compare_backends(backends: &[BackendEvaluation]) -> ComparisonTable {
    let mut cases: BTreeSet<&str> = backends
        .iter()
        .flat_map(|b| b.rows.iter().map(|r| r.case_label.as_str()))
        .filter(|c| *c != ALL_CASES)
        .collect();
    if cases.is_empty() {
        cases.insert(ALL_CASES);
    }
    let columns: Vec<ComparisonColumn> = cases
        .iter()
        .flat_map(|c| {
            backends.iter().map(move |b| ComparisonColumn {
                backend: b.backend.clone(),
                case_label: c.to_string(),
            })
        })
        .collect();
    let rows = COMPARED
        .iter()
        .map(|(name, get)| ComparisonRow {
            metric: name.to_string(),
            values: columns
                .iter()
                .map(|col| {
                    backends
                        .iter()
                        .find(|b| b.backend == col.backend)
                        .and_then(|b| b.row(&col.case_label))
                        .and_then(get)
                })
                .collect(),
        })
        .collect();
    ComparisonTable { columns, rows }
}

fn cell(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".to_string(), |x| format!("{x:.3}"))
}

/// Left-aligned first column, right-aligned numeric columns.
fn render_table(header: &[String], rows: &[Vec<String>]) -> String {
    let cols = header.len();
    let mut widths: Vec<usize> = header.iter().map(|h| h.chars().count()).collect();
    for r in rows {
        for (i, c) in r.iter().enumerate().take(cols) {
            widths[i] = widths[i].max(c.chars().count());
        }
    }
    let line = |cells: &[String]| {
        let mut s = String::new();
        for (i, c) in cells.iter().enumerate() {
            if i == 0 {
                let _ = write!(s, "{c:<w$}", w = widths[0]);
            } else {
                let _ = write!(s, "  {c:>w$}", w = widths[i]);
            }
        }
        s.trim_end().to_string()
    };
    let mut out = line(header);
    out.push('\n');
    out.push_str(&"-".repeat(widths.iter().sum::<usize>() + 2 * (cols - 1)));
    out.push('\n');
    for r in rows {
        out.push_str(&line(r));
        out.push('\n');
    }
    out
}

impl ComparisonTable {
    pub fn render_text(&self) -> String {
        let mut header = vec!["metric".to_string()];
        header.extend(self.columns.iter().map(|c| format!("{}/{}", c.backend, c.case_label)));
        let rows: Vec<Vec<String>> = self
            .rows
            .iter()
            .map(|r| {
                let mut v = vec![r.metric.clone()];
                v.extend(r.values.iter().map(|x| cell(*x)));
                v
            })
            .collect();
        render_table(&header, &rows)
    }
}

/// The full evaluation written under `reports/`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub backends: Vec<BackendEvaluation>,
    pub per_strategy: Vec<StrategyRow>,
    pub impact: Option<ImpactReport>,
    pub comparison: ComparisonTable,
}

impl EvaluationReport {
    pub fn new(backends: Vec<BackendEvaluation>, per_strategy: Vec<StrategyRow>, impact: Option<ImpactReport>) -> Self {
        let comparison = compare_backends(&backends);
        EvaluationReport {
            backends,
            per_strategy,
            impact,
            comparison,
        }
    }

    pub fn render_text(&self) -> String {
        let mut out = String::from("Detection by backend\n\n");
        out.push_str(&self.comparison.render_text());
        for b in &self.backends {
            let _ = writeln!(out, "\nClassification accuracy ({})\n", b.backend);
            let rows: Vec<Vec<String>> = b
                .classification
                .classes
                .iter()
                .map(|c| {
                    vec![
                        c.risk.to_string(),
                        c.gold.to_string(),
                        c.correct.to_string(),
                        cell(c.accuracy_pct),
                        cell(c.error_pct),
                    ]
                })
                .collect();
            let header = ["class", "gold", "correct", "accuracy_pct", "error_pct"].map(String::from);
            out.push_str(&render_table(&header, &rows));
        }
        if !self.per_strategy.is_empty() {
            out.push_str("\nScores by strategy\n\n");
            let rows: Vec<Vec<String>> = self
                .per_strategy
                .iter()
                .map(|s| {
                    vec![
                        format!("{:?}", s.strategy),
                        s.counts.tp.to_string(),
                        s.counts.fp.to_string(),
                        s.counts.fn_.to_string(),
                        cell(s.metrics.map(|m| m.precision)),
                        cell(s.metrics.map(|m| m.recall)),
                    ]
                })
                .collect();
            let header = ["strategy", "tp", "fp", "fn", "precision", "recall"].map(String::from);
            out.push_str(&render_table(&header, &rows));
        }
        if let Some(i) = &self.impact {
            out.push_str("\nAnonymization impact\n\n");
            let rows = vec![
                vec!["word_count_delta_pct".into(), format!("{:.3}", i.word_count_delta_pct)],
                vec![format!("top{}_term_overlap_pct", i.top_k), format!("{:.3}", i.topk_term_overlap_pct)],
                vec!["sentiment_alignment_pct".into(), format!("{:.3}", i.sentiment_alignment_pct)],
            ];
            out.push_str(&render_table(&["metric".into(), "value".into()], &rows));
        }
        out
    }
}
