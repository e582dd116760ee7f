use std::collections::HashMap;

use proptest::prelude::*;
use sfaa_core::evaluation::{
    identification_report, impact_report, match_spans, metrics, Counts, MatchMode, MatchRule, SentimentLexicon,
    Stopwords,
};
use sfaa_core::model::{
    Detection, DetectionSource, GoldAnnotation, GoldAnnotationSet, IdentifierCategory, IdentifierGroup, RiskClass,
    SpeakerRole, TextSpan, TranscriptDocument,
};

/// A span as (turn, start, end, category index).
type Raw = (usize, usize, usize, usize);

const CATEGORIES: [(IdentifierGroup, &str); 2] = [
    (IdentifierGroup::Direct, "person-name"),
    (IdentifierGroup::OrganizationalVisual, "organization"),
];

fn span(r: &Raw) -> TextSpan {
    TextSpan {
        doc_id: "d".into(),
        turn_index: r.0,
        start: r.1,
        end: r.2,
        surface: "x".repeat(r.2 - r.1),
    }
}

fn category(r: &Raw) -> IdentifierCategory {
    let (g, s) = CATEGORIES[r.3];
    IdentifierCategory::new(g, s)
}

/// Non-overlapping spans per turn: sorted cut points paired up.
fn arb_side(max: usize) -> impl Strategy<Value = Vec<Raw>> {
    (
        prop::collection::btree_set(0usize..40, 0..=max),
        prop::collection::btree_set(0usize..40, 0..=max),
        prop::collection::vec(0usize..2, 2 * max + 2),
    )
        .prop_map(move |(a, b, cats)| {
            let mut out = Vec::new();
            for (turn, cuts) in [a, b].into_iter().enumerate() {
                let cuts: Vec<usize> = cuts.into_iter().collect();
                for pair in cuts.chunks_exact(2) {
                    out.push((turn, pair[0], pair[1], cats[out.len()]));
                }
            }
            out.truncate(max);
            out
        })
}

/// At most 20 spans in total.
fn arb_instance() -> impl Strategy<Value = (Vec<Raw>, Vec<Raw>)> {
    (0usize..=20).prop_flat_map(|n| (arb_side(n), arb_side(20 - n)))
}

fn arb_rule() -> impl Strategy<Value = MatchRule> {
    prop_oneof![
        Just(MatchRule::default()),
        (0.5f64..=1.0, any::<bool>()).prop_map(|(min_jaccard, require_category_match)| MatchRule {
            mode: MatchMode::Overlap { min_jaccard },
            require_category_match,
        }),
        any::<bool>().prop_map(|require_category_match| MatchRule {
            mode: MatchMode::Exact,
            require_category_match,
        }),
    ]
}

fn detections(raw: &[Raw]) -> Vec<Detection> {
    raw.iter().map(|r| Detection::new(span(r), category(r), DetectionSource::Rule)).collect()
}

fn gold_set(raw: &[Raw]) -> GoldAnnotationSet {
    let mut set = GoldAnnotationSet::default();
    set.docs.insert(
        "d".into(),
        raw.iter()
            .map(|r| GoldAnnotation {
                span: span(r),
                category: category(r),
                risk: RiskClass::Direct,
            })
            .collect(),
    );
    set
}

/// Admissibility written out directly from the definitions.
fn admissible(d: &Raw, g: &Raw, rule: &MatchRule) -> bool {
    if rule.require_category_match && d.3 != g.3 {
        return false;
    }
    if d.0 != g.0 {
        return false;
    }
    match rule.mode {
        MatchMode::Exact => d.1 == g.1 && d.2 == g.2,
        MatchMode::Overlap { min_jaccard } => {
            let inter = d.2.min(g.2).saturating_sub(d.1.max(g.1));
            let union = d.2.max(g.2) - d.1.min(g.1);
            inter > 0 && inter as f64 / union as f64 >= min_jaccard
        }
    }
}

/// Maximum one-to-one matching by exhaustive search over subsets of the
/// smaller side.
fn optimal_matching(dets: &[Raw], gold: &[Raw], rule: &MatchRule) -> usize {
    let (rows, cols, flip) = if dets.len() >= gold.len() { (dets, gold, false) } else { (gold, dets, true) };
    let adm: Vec<Vec<bool>> = rows
        .iter()
        .map(|r| {
            cols.iter()
                .map(|c| if flip { admissible(c, r, rule) } else { admissible(r, c, rule) })
                .collect()
        })
        .collect();
    fn best(i: usize, used: u32, adm: &[Vec<bool>], memo: &mut HashMap<(usize, u32), usize>) -> usize {
        if i == adm.len() {
            return 0;
        }
        if let Some(&v) = memo.get(&(i, used)) {
            return v;
        }
        let mut v = best(i + 1, used, adm, memo);
        for (j, ok) in adm[i].iter().enumerate() {
            if *ok && used & (1 << j) == 0 {
                v = v.max(1 + best(i + 1, used | (1 << j), adm, memo));
            }
        }
        memo.insert((i, used), v);
        v
    }
    best(0, 0, &adm, &mut HashMap::new())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn greedy_matching_equals_the_optimal_oracle((d, g) in arb_instance(), rule in arb_rule()) {
        prop_assert!(d.len() + g.len() <= 20);
        let result = match_spans(&detections(&d), &gold_set(&g), &rule);
        let opt = optimal_matching(&d, &g, &rule);
        let c = Counts::of(&result);
        prop_assert_eq!(c, Counts::new(opt, d.len() - opt, g.len() - opt));
        for p in &result.matched {
            let dr = (p.detection.span.turn_index, p.detection.span.start, p.detection.span.end, CATEGORIES.iter().position(|x| x.1 == p.detection.category.subtype).unwrap());
            let gr = (p.gold.span.turn_index, p.gold.span.start, p.gold.span.end, CATEGORIES.iter().position(|x| x.1 == p.gold.category.subtype).unwrap());
            prop_assert!(admissible(&dr, &gr, &rule));
        }

        if c.total() == 0 {
            prop_assert!(metrics(c).is_err());
            return Ok(());
        }
        let m = metrics(c).unwrap();
        let ratio = |n: usize, k: usize| if k == 0 { 0.0 } else { n as f64 / k as f64 };
        prop_assert_eq!(m.precision, ratio(opt, d.len()));
        prop_assert_eq!(m.recall, ratio(opt, g.len()));
        prop_assert_eq!(m.accuracy, ratio(opt, d.len() + g.len() - opt));
        for x in [m.precision, m.recall, m.accuracy] {
            prop_assert!((0.0..=1.0).contains(&x));
        }

        let row = identification_report(&[c], "b", "all");
        // Rates are integer ratios, so the complements add up exactly.
        if !g.is_empty() {
            prop_assert_eq!(row.missed_rate.num + c.tp, row.missed_rate.den);
            let missed = row.missed_rate.num as f64 / row.missed_rate.den as f64;
            prop_assert!((m.recall - (1.0 - missed)).abs() <= f64::EPSILON);
        }
        if !d.is_empty() {
            prop_assert_eq!(row.wrong_rate.num + c.tp, row.wrong_rate.den);
            let wrong = row.wrong_rate.num as f64 / row.wrong_rate.den as f64;
            prop_assert!((m.precision - (1.0 - wrong)).abs() <= f64::EPSILON);
        }
    }

    #[test]
    fn matching_ignores_detection_order(
        (d, g) in arb_instance().prop_flat_map(|(d, g)| (Just(d).prop_shuffle(), Just(g))),
        rule in arb_rule(),
    ) {
        let dets = detections(&d);
        let mut reversed = dets.clone();
        reversed.reverse();
        let gold = gold_set(&g);
        prop_assert_eq!(match_spans(&dets, &gold, &rule), match_spans(&reversed, &gold, &rule));
    }
}

fn arb_corpus() -> impl Strategy<Value = Vec<TranscriptDocument>> {
    let words = prop::sample::select(vec!["good", "bad", "team", "happy", "office", "worried", "the", "we", "café"]);
    let turn = prop::collection::vec(words, 0..15).prop_map(|w| w.join(" "));
    prop::collection::vec(prop::collection::vec(turn, 0..5), 1..6).prop_map(|docs| {
        docs.into_iter()
            .enumerate()
            .map(|(i, turns)| {
                let mut d = TranscriptDocument::new(format!("doc-{i}"));
                for t in turns {
                    d.push_turn(SpeakerRole::Participant, t);
                }
                d
            })
            .collect()
    })
}

proptest! {
    #[test]
    fn impact_of_a_corpus_against_itself_is_neutral(corpus in arb_corpus(), k in 1usize..60) {
        let r = impact_report(&corpus, &corpus, &SentimentLexicon::default(), &Stopwords::default(), k).unwrap();
        prop_assert_eq!(r.word_count_delta_pct, 0.0);
        prop_assert_eq!(r.topk_term_overlap_pct, 100.0);
        prop_assert_eq!(r.sentiment_alignment_pct, 100.0);
    }
}
