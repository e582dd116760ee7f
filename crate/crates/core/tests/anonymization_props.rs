mod common;

use std::collections::{BTreeMap, BTreeSet};

use chrono::NaiveDate;
use proptest::prelude::*;
use sfaa_core::anonymization::dates::{parse_date, render, DateShape};
use sfaa_core::anonymization::vault::entity_key;
use sfaa_core::anonymization::{
    apply_corpus, apply_plan, perturb_date, residual_sweep, resolve_verdicts, select_strategy, AnonymizationConfig,
    Anonymizer, CorpusStats, GeneralizationHierarchy, StrategyMatrix, Vault,
};
use sfaa_core::classification::{classify_all, escalate_combinations, RiskPolicy};
use sfaa_core::detection::{detect_dictionary, detect_rules, merge_detections, CompiledRules};
use sfaa_core::gencorpus::{generate, GenSpec, GAZETTEER_SUBTYPES, RULE_SUBTYPES};
use sfaa_core::model::{
    ActionScope, AnonymizationAction, Detection, DetectionSource, RiskClass, SpeakerRole, StrategyKind, Technique,
    TextSpan, TranscriptDocument,
};
use sfaa_core::taxonomy::Taxonomy;
use sfaa_core::text::char_len;

/// Documents mentioning people and organizations drawn from small pools, so
/// the same entity recurs across documents; every mention is a detection.
fn entity_corpus(mentions: &[(usize, bool, usize, bool)]) -> (Vec<TranscriptDocument>, Vec<Detection>) {
    let tax = Taxonomy::default();
    let policy = RiskPolicy::default();
    let mut texts: BTreeMap<usize, String> = BTreeMap::new();
    let mut spans: Vec<(usize, usize, usize, &str, String)> = Vec::new();
    for &(doc, is_org, which, upper) in mentions {
        let (subtype, mut surface) = if is_org {
            ("organization", format!("Acme{which} Ltd"))
        } else {
            ("person-name", format!("Person{which}"))
        };
        if upper {
            surface = surface.to_uppercase();
        }
        let text = texts.entry(doc % 40).or_default();
        text.push_str("then ");
        let start = char_len(text);
        text.push_str(&surface);
        text.push_str(" said so. ");
        spans.push((doc % 40, start, start + char_len(&surface), subtype, surface));
    }
    let corpus: Vec<TranscriptDocument> = texts
        .iter()
        .map(|(i, t)| common::doc(&format!("doc-{i:02}"), &[t.as_str()]))
        .collect();
    let dets = spans
        .into_iter()
        .map(|(doc, start, end, subtype, surface)| {
            let span = TextSpan {
                doc_id: format!("doc-{doc:02}"),
                turn_index: 0,
                start,
                end,
                surface,
            };
            Detection::new(span, tax.category(subtype).unwrap(), DetectionSource::Dictionary)
        })
        .collect::<Vec<_>>();
    (corpus, classify_all(&dets, &policy).unwrap())
}

fn plan_aliases(corpus: &[TranscriptDocument], dets: &[Detection]) -> (Vault, Vec<AnonymizationAction>) {
    let cfg = AnonymizationConfig::default();
    let hierarchy = GeneralizationHierarchy::default();
    let stats = CorpusStats::compute(corpus, dets);
    let planned = resolve_verdicts(dets, &[], true).unwrap();
    let mut vault = Vault::new("alias-key");
    let plan = Anonymizer::new(&cfg, &hierarchy, None, &stats)
        .unwrap()
        .plan_corpus(corpus, &planned, &mut vault)
        .unwrap();
    (vault, plan.actions)
}

fn arb_mentions(n: usize) -> impl Strategy<Value = Vec<(usize, bool, usize, bool)>> {
    prop::collection::vec((0usize..40, any::<bool>(), 0usize..250, any::<bool>()), n)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn aliases_are_consistent_injective_and_order_independent(
        (mentions, shuffled) in arb_mentions(1000).prop_flat_map(|m| (Just(m.clone()), Just(m).prop_shuffle())),
    ) {
        let (corpus, dets) = entity_corpus(&mentions);
        let (vault, actions) = plan_aliases(&corpus, &dets);

        let mut alias_of: BTreeMap<String, String> = BTreeMap::new();
        for a in &actions {
            let subtype = dets.iter().find(|d| d.detection_id == a.detection_id).unwrap().category.subtype.clone();
            let key = entity_key(&subtype, &a.original_surface);
            let prev = alias_of.insert(key.clone(), a.replacement.clone());
            prop_assert!(prev.is_none_or(|p| p == a.replacement), "{key:?} got two aliases");
        }
        let mut per_subtype: BTreeMap<&str, BTreeSet<&String>> = BTreeMap::new();
        for (key, alias) in &alias_of {
            let subtype = key.split('\u{1f}').next().unwrap();
            prop_assert!(per_subtype.entry(subtype).or_default().insert(alias), "alias {alias} reused");
        }
        prop_assert_eq!(&alias_of, &vault.alias_map);

        // Input order of documents and detections does not change the table.
        let mut rev_corpus = corpus.clone();
        rev_corpus.reverse();
        let mut rev_dets = dets.clone();
        rev_dets.reverse();
        let (vault2, _) = plan_aliases(&rev_corpus, &rev_dets);
        prop_assert_eq!(&vault.alias_map, &vault2.alias_map);
        let (corpus3, dets3) = entity_corpus(&shuffled);
        let (vault3, _) = plan_aliases(&corpus3, &dets3);
        prop_assert_eq!(
            vault.alias_map.keys().collect::<BTreeSet<_>>(),
            vault3.alias_map.keys().collect::<BTreeSet<_>>()
        );
    }

    #[test]
    fn detokenize_inverts_tokenize(values in prop::collection::vec(any::<String>(), 1000)) {
        let mut vault = Vault::new("token-key");
        let tokens: Vec<String> = values.iter().map(|v| vault.tokenize(v)).collect();
        for (v, t) in values.iter().zip(&tokens) {
            prop_assert_eq!(vault.detokenize(t).unwrap(), v.as_str());
            prop_assert_eq!(&vault.tokenize(v), t);
        }
        let distinct_values: BTreeSet<&String> = values.iter().collect();
        let distinct_tokens: BTreeSet<&String> = tokens.iter().collect();
        prop_assert_eq!(distinct_values.len(), distinct_tokens.len());

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("vault.json");
        vault.save(&path).unwrap();
        let reloaded = Vault::load_or_new(&path, "token-key").unwrap();
        for (v, t) in values.iter().zip(&tokens) {
            prop_assert_eq!(reloaded.detokenize(t).unwrap(), v.as_str());
        }
    }
}

fn arb_shape() -> impl Strategy<Value = DateShape> {
    prop_oneof![
        Just(DateShape::Iso),
        (any::<bool>(), any::<bool>()).prop_map(|(pad_day, pad_month)| DateShape::Slash {
            day_first: true,
            pad_day,
            pad_month
        }),
        any::<bool>().prop_map(|pad_day| DateShape::DayMonthYear { pad_day }),
    ]
}

fn arb_date() -> impl Strategy<Value = NaiveDate> {
    (0i64..36_500).prop_map(|d| NaiveDate::from_ymd_opt(1950, 1, 1).unwrap() + chrono::Duration::days(d))
}

proptest! {
    #[test]
    fn date_perturbation_preserves_intervals_within_a_document(
        docs in prop::collection::vec(prop::collection::vec((arb_date(), arb_shape()), 1..8), 1..5),
        key in "[a-z]{1,12}",
    ) {
        let mut vault = Vault::new(key.as_bytes());
        for (i, dates) in docs.iter().enumerate() {
            let doc_id = format!("doc-{i}");
            let mut shifted = Vec::new();
            for (date, shape) in dates {
                let surface = render(*date, *shape);
                let span = TextSpan { doc_id: doc_id.clone(), turn_index: 0, start: 0, end: char_len(&surface), surface };
                let d = Detection::new(span, Taxonomy::default().category("date").unwrap(), DetectionSource::Rule);
                let a = perturb_date(&d, &mut vault, true).unwrap();
                let back = parse_date(&a.replacement, true).unwrap();
                // Padding of two-digit fields is not observable, so only the
                // variant is compared.
                prop_assert_eq!(std::mem::discriminant(&back.shape), std::mem::discriminant(shape));
                shifted.push(back.date);
            }
            for i in 0..dates.len() {
                for j in 0..dates.len() {
                    prop_assert_eq!(dates[i].0 - dates[j].0, shifted[i] - shifted[j]);
                }
            }
            let offset = vault.date_offset(&doc_id);
            prop_assert!((-365..=365).contains(&offset));
            prop_assert_eq!((shifted[0] - dates[0].0).num_days(), offset);
        }
    }

    /// Characters outside action spans are untouched; the result equals an
    /// independent splice over character vectors.
    #[test]
    fn apply_plan_only_changes_action_spans(
        text in "[a-zé漢 ]{0,60}",
        cuts in prop::collection::btree_set(0usize..61, 0..10),
        reps in prop::collection::vec("[A-Z_\\[\\]0-9]{0,8}", 10),
    ) {
        let chars: Vec<char> = text.chars().collect();
        let mut cuts: Vec<usize> = cuts.into_iter().filter(|&c| c <= chars.len()).collect();
        if cuts.len() % 2 == 1 {
            cuts.pop();
        }
        let doc = common::doc("loc", &[&text]);
        let mut actions = Vec::new();
        let mut expected: Vec<char> = Vec::new();
        let mut at = 0;
        for (k, pair) in cuts.chunks_exact(2).enumerate() {
            let (s, e) = (pair[0], pair[1]);
            let surface: String = chars[s..e].iter().collect();
            expected.extend(&chars[at..s]);
            expected.extend(reps[k].chars());
            at = e;
            actions.push(AnonymizationAction {
                detection_id: format!("a{k}"),
                strategy: StrategyKind::of(Technique::Full),
                replacement: reps[k].clone(),
                original_surface: surface.clone(),
                applied_span: TextSpan { doc_id: "loc".into(), turn_index: 0, start: s, end: e, surface },
                scope: ActionScope::Span,
            });
        }
        expected.extend(&chars[at..]);
        let out = apply_plan(&doc, &actions).unwrap();
        prop_assert_eq!(out.turns[0].text.clone(), expected.into_iter().collect::<String>());
    }
}

#[test]
fn strategy_selection_is_total_over_the_shipped_taxonomy() {
    let tax = Taxonomy::default();
    let matrix = StrategyMatrix::default();
    for subtype in tax.subtypes.keys() {
        for risk in RiskClass::ALL {
            let span = TextSpan {
                doc_id: "d".into(),
                turn_index: 0,
                start: 0,
                end: 1,
                surface: "x".into(),
            };
            let mut d = Detection::new(span, tax.category(subtype).unwrap(), DetectionSource::Human);
            d.risk = Some(risk);
            let kind = select_strategy(&d, &matrix).unwrap();
            assert_eq!(kind.technique.strategy(), kind.strategy, "{subtype} at {risk}");
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    /// With every detection accepted, no Direct or StrongIndirect surface
    /// survives anywhere in its anonymized document.
    #[test]
    fn accepted_high_risk_surfaces_never_survive(seed in any::<u64>(), with_gazetteer in any::<bool>()) {
        let tax = Taxonomy::default();
        let policy = RiskPolicy::default();
        let mut subtypes: Vec<String> = RULE_SUBTYPES.iter().map(|s| s.to_string()).collect();
        if with_gazetteer {
            subtypes.extend(GAZETTEER_SUBTYPES.iter().map(|s| s.to_string()));
        }
        let spec = GenSpec { documents: 8, plants_per_doc: 6, subtypes, ..GenSpec::default() };
        let g = generate(seed, &spec, &tax, &policy).unwrap();
        let rules = CompiledRules::default();
        let gaz = g.gazetteer.compile(&tax).unwrap();
        let found: Vec<Detection> = g
            .corpus
            .iter()
            .flat_map(|d| {
                let mut v = detect_rules(d, &rules);
                v.extend(detect_dictionary(d, &gaz));
                v
            })
            .collect();
        let merged = merge_detections(&[found], &policy);
        let classified = escalate_combinations(&classify_all(&merged, &policy).unwrap(), &policy);
        let planned = resolve_verdicts(&classified, &[], true).unwrap();
        let stats = CorpusStats::compute(&g.corpus, &classified);
        let cfg = AnonymizationConfig::default();
        let hierarchy = GeneralizationHierarchy::default();
        let mut vault = Vault::new("residual-key");
        let plan = Anonymizer::new(&cfg, &hierarchy, None, &stats)
            .unwrap()
            .plan_corpus(&g.corpus, &planned, &mut vault)
            .unwrap();
        let (anonymized, audit) = apply_corpus(&g.corpus, &plan.actions).unwrap();
        prop_assert_eq!(audit.len(), plan.actions.len());
        prop_assert!(planned.iter().any(|p| matches!(p.detection.risk, Some(RiskClass::Direct | RiskClass::StrongIndirect))));
        let residuals = residual_sweep(&anonymized, &planned);
        prop_assert!(residuals.is_empty(), "{residuals:?}");
    }
}

#[test]
fn an_empty_plan_is_the_identity() {
    let mut doc = TranscriptDocument::new("s");
    doc.push_turn(SpeakerRole::Interviewer, "Where do you work?");
    doc.push_turn(SpeakerRole::Participant, "At OptiCore.");
    let out = apply_plan(&doc, &[]).unwrap();
    assert_eq!(out, doc);
}
