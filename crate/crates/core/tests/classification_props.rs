mod common;

use proptest::prelude::*;
use sfaa_core::classification::{classify, classify_all, escalate_combinations, RiskPolicy};
use sfaa_core::model::{risk_priority, Detection, DetectionSource, RiskClass, TextSpan};
use sfaa_core::taxonomy::Taxonomy;

#[test]
fn classification_is_a_total_pure_lookup_over_the_shipped_taxonomy() {
    let tax = Taxonomy::default();
    let policy = RiskPolicy::default();
    policy.validate(&tax).unwrap();
    for subtype in tax.subtypes.keys() {
        let span = TextSpan {
            doc_id: "d".into(),
            turn_index: 0,
            start: 0,
            end: 1,
            surface: "x".into(),
        };
        let d = Detection::new(span, tax.category(subtype).unwrap(), DetectionSource::Human);
        let a = classify(&d, &policy).unwrap();
        let b = classify(&d, &policy).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.risk, policy.risk_of(subtype), "{subtype}");
    }
}

#[test]
fn risk_priority_is_a_semilattice() {
    for a in RiskClass::ALL {
        assert_eq!(risk_priority(a, a), a);
        for b in RiskClass::ALL {
            assert_eq!(risk_priority(a, b), risk_priority(b, a));
            assert!(risk_priority(a, b) >= a && risk_priority(a, b) >= b);
            for c in RiskClass::ALL {
                assert_eq!(risk_priority(risk_priority(a, b), c), risk_priority(a, risk_priority(b, c)));
            }
        }
    }
}

const SUBTYPES: [&str; 8] = [
    "location", "age", "date", "team-size", "organization", "person-name", "job-title", "email",
];

fn arb_dets() -> impl Strategy<Value = Vec<Detection>> {
    prop::collection::vec((0..3usize, 0..SUBTYPES.len(), 0..100usize), 0..25).prop_map(|raw| {
        let tax = Taxonomy::default();
        let policy = RiskPolicy::default();
        raw.into_iter()
            .map(|(doc, sub, at)| {
                let span = TextSpan {
                    doc_id: format!("d{doc}"),
                    turn_index: 0,
                    start: at,
                    end: at + 1,
                    surface: "x".into(),
                };
                let d = Detection::new(span, tax.category(SUBTYPES[sub]).unwrap(), DetectionSource::Rule);
                classify(&d, &policy).unwrap()
            })
            .collect()
    })
}

proptest! {
    #[test]
    fn escalation_is_monotone(base in arb_dets(), extra in arb_dets()) {
        let policy = RiskPolicy::default();
        let before = escalate_combinations(&base, &policy);
        let mut grown = base.clone();
        grown.extend(extra);
        let after = escalate_combinations(&grown, &policy);
        for (b, a) in before.iter().zip(&after) {
            prop_assert!(a.risk >= b.risk, "{:?} lowered from {:?} to {:?}", b.detection_id, b.risk, a.risk);
        }
        for (orig, a) in grown.iter().zip(&after) {
            prop_assert!(a.risk >= orig.risk);
        }
    }

    #[test]
    fn escalation_is_idempotent(dets in arb_dets()) {
        let policy = RiskPolicy::default();
        let once = escalate_combinations(&dets, &policy);
        prop_assert_eq!(&once, &escalate_combinations(&once, &policy));
    }

    #[test]
    fn escalation_fires_exactly_at_the_distinct_subtype_threshold(dets in arb_dets()) {
        let policy = RiskPolicy::default();
        let out = escalate_combinations(&classify_all(&dets, &policy).unwrap(), &policy);
        for doc in ["d0", "d1", "d2"] {
            let mut weak: Vec<&str> = dets
                .iter()
                .filter(|d| d.span.doc_id == doc && d.risk == Some(RiskClass::WeakIndirect))
                .map(|d| d.category.subtype.as_str())
                .collect();
            weak.sort();
            weak.dedup();
            let fires = weak.len() >= policy.escalation.k_weak;
            for (d, o) in dets.iter().zip(&out) {
                if d.span.doc_id == doc && d.risk == Some(RiskClass::WeakIndirect) {
                    let want = if fires { policy.escalation.escalate_to } else { RiskClass::WeakIndirect };
                    prop_assert_eq!(o.risk, Some(want));
                }
            }
        }
    }
}
