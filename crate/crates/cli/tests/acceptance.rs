//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any
//! criterion fails. Runs without a harness so the lines are always printed.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use chrono::NaiveDate;
use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;

use sfaa_core::anonymization::dates::{parse_date, render, DateShape};
use sfaa_core::anonymization::{
    apply_corpus, perturb_date, resolve_verdicts, AnonymizationConfig, Anonymizer, CorpusStats,
    GeneralizationHierarchy, StrategyMatrix, Vault,
};
use sfaa_core::classification::{classify_all, escalate_combinations, RiskPolicy};
use sfaa_core::detection::{detect_dictionary, detect_llm, detect_rules, merge_detections, CompiledRules, PromptTemplate};
use sfaa_core::evaluation::{
    identification_report, impact_report, match_spans, metrics, Counts, MatchMode, MatchRule, SentimentLexicon,
    Stopwords, DEFAULT_TOP_K,
};
use sfaa_core::gencorpus::{generate, GenSpec, GAZETTEER_SUBTYPES, RULE_SUBTYPES};
use sfaa_core::llm::MockClient;
use sfaa_core::model::{
    Decision, Detection, DetectionSource, GoldAnnotation, GoldAnnotationSet, IdentifierCategory, IdentifierGroup,
    RiskClass, SpeakerRole, Strategy, StrategyKind, Technique, TextSpan, TranscriptDocument,
};
use sfaa_core::pipeline::{artifacts, Pipeline};
use sfaa_core::taxonomy::Taxonomy;
use sfaa_core::text::{char_len, normalize_ws};
use sfaa_review::{FinalizeRequest, Project, VerdictRequest};

type Outcome = Result<String, String>;
type Criterion = (&'static str, Option<Duration>, fn() -> Outcome);

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        let holds: bool = $cond;
        if !holds {
            return Err(format!($($msg)+));
        }
    };
}

fn fixture() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/worked_examples")
}

fn sfaa(args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_sfaa"))
        .args(args)
        .output()
        .map_err(|e| format!("cannot run sfaa: {e}"))?;
    if out.status.success() {
        Ok(())
    } else {
        Err(format!("sfaa {args:?} exited with {}: {}", out.status, String::from_utf8_lossy(&out.stderr)))
    }
}

fn path_str(p: &Path) -> &str {
    p.to_str().expect("utf-8 temp path")
}

fn read_corpus(path: &Path) -> Vec<TranscriptDocument> {
    sfaa_core::io::read_jsonl(path).expect("anonymized corpus")
}

/// Every file under `dir`, keyed by relative path.
fn tree(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(p.strip_prefix(dir).unwrap().to_path_buf(), std::fs::read(&p).unwrap());
            }
        }
    }
    out
}

fn worked_examples_anonymize(out: &Path, jobs: usize) -> Result<(), String> {
    let config = fixture().join("config.json");
    sfaa(&["--config", path_str(&config), "--project", path_str(out), "--jobs", &jobs.to_string(), "anonymize"])
}

fn worked_examples() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    worked_examples_anonymize(&out, 1)?;
    let expected = std::fs::read_to_string(fixture().join("expected.txt")).unwrap();
    let got: Vec<String> = read_corpus(&out.join(artifacts::ANONYMIZED))
        .into_iter()
        .map(|d| d.turns.iter().map(|t| t.text.as_str()).collect::<Vec<_>>().join("\n"))
        .collect();
    let want: Vec<&str> = expected.lines().collect();
    ensure!(want.len() == 8, "fixture lists {} rows", want.len());
    ensure!(got.len() == want.len(), "{} documents written", got.len());
    let exact = got.iter().zip(&want).filter(|(g, w)| g == *w).count();
    for (g, w) in got.iter().zip(&want) {
        ensure!(g == w, "{exact}/8 rows exact; got {g:?}, want {w:?}");
    }
    Ok("8/8 rows exact".into())
}

fn rule_exactness() -> Outcome {
    let tax = Taxonomy::default();
    let policy = RiskPolicy::default();
    let spec = GenSpec {
        documents: 50,
        plants_per_doc: 5,
        subtypes: RULE_SUBTYPES.iter().map(|s| s.to_string()).collect(),
        ..GenSpec::default()
    };
    let g = generate(7, &spec, &tax, &policy).map_err(|e| e.to_string())?;
    ensure!(g.gold.len() == 250, "{} gold annotations", g.gold.len());
    let rules = CompiledRules::default();
    let found: Vec<Detection> = g.corpus.iter().flat_map(|d| detect_rules(d, &rules)).collect();
    let rule = MatchRule {
        mode: MatchMode::Exact,
        require_category_match: true,
    };
    let c = Counts::of(&match_spans(&found, &g.gold, &rule));
    let m = metrics(c).map_err(|e| e.to_string())?;
    ensure!(m.precision == 1.0 && m.recall == 1.0, "precision {} recall {} ({c:?})", m.precision, m.recall);
    Ok(format!("P = R = 1.0 over {} planted identifiers (exact spans)", c.tp))
}

const WORDS: [&str; 12] = [
    "river", "lamp", "orbit", "maple", "quartz", "delta", "ember", "harbor", "violet", "canyon", "pixel", "saffron",
];

fn hallucination_filter() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0x4a11);
    let tax = Taxonomy::default();
    let (mut genuine_total, mut fabricated_total) = (0, 0);
    for doc_no in 0..20 {
        // 120 distinct tokens in 4 turns; windows come from 40 disjoint
        // three-token segments so each genuine quote occurs exactly once.
        let tokens: Vec<String> = (0..120).map(|i| format!("{}{i}", WORDS.choose(&mut rng).unwrap())).collect();
        let mut doc = TranscriptDocument::new(format!("h{doc_no:02}"));
        for turn in tokens.chunks(30) {
            doc.push_turn(SpeakerRole::Participant, turn.join(" "));
        }
        let mut items = Vec::new();
        let mut genuine = BTreeSet::new();
        let mut fabricated = BTreeSet::new();
        for (seg_no, seg) in tokens.chunks(3).enumerate() {
            let len = rng.random_range(1..=3);
            let sep = if rng.random_bool(0.2) { "  \n " } else { " " };
            let quote = seg[..len].join(sep);
            genuine.insert(normalize_ws(&quote));
            items.push(quote);
            if seg_no % 4 == 0 {
                let fake = match seg_no % 3 {
                    0 => format!("{} Zyqlo{doc_no}x{seg_no}", seg[0]),
                    1 => seg[..len].join(" ").to_uppercase(),
                    _ => format!("{}9{}", seg[0], seg[1..].join(" ")),
                };
                fabricated.insert(fake.clone());
                items.push(fake);
            }
        }
        items.shuffle(&mut rng);
        let reply: Vec<Value> = items
            .iter()
            .map(|q| serde_json::json!({"quote": q, "group": "Direct", "subtype": "person-name"}))
            .collect();
        let mock = MockClient::constant(&serde_json::to_string(&reply).unwrap());
        let out = detect_llm(&doc, &mock, &PromptTemplate::default(), 4000, &tax).map_err(|e| e.to_string())?;
        let kept: BTreeSet<String> = out.detections.iter().map(|d| d.span.surface.clone()).collect();
        let dropped: BTreeSet<String> = out.dropped.iter().map(|d| d.quote.clone()).collect();
        ensure!(kept == genuine, "{}: {} of {} genuine quotes grounded", doc.doc_id, kept.len(), genuine.len());
        ensure!(dropped == fabricated, "{}: dropped {dropped:?}, fabricated {fabricated:?}", doc.doc_id);
        genuine_total += genuine.len();
        fabricated_total += fabricated.len();
    }
    let total = genuine_total + fabricated_total;
    ensure!(total == 1000 && fabricated_total == 200, "{total} candidates, {fabricated_total} fabricated");
    Ok(format!("{fabricated_total}/{fabricated_total} fabricated dropped, {genuine_total}/{genuine_total} genuine grounded"))
}

fn vault_properties() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0x7a17);
    let tax = Taxonomy::default();
    let policy = RiskPolicy::default();

    // 1000 mentions of 200 people and 200 organizations over 40 documents.
    let mut texts: BTreeMap<usize, String> = BTreeMap::new();
    let mut dets = Vec::new();
    for _ in 0..1000 {
        let doc = rng.random_range(0..40);
        let (subtype, surface) = if rng.random_bool(0.5) {
            ("organization", format!("Acme{} Ltd", rng.random_range(0..200)))
        } else {
            ("person-name", format!("Person{}", rng.random_range(0..200)))
        };
        let text = texts.entry(doc).or_default();
        text.push_str("then ");
        let start = char_len(text);
        text.push_str(&surface);
        text.push_str(" said so. ");
        let span = TextSpan {
            doc_id: format!("doc-{doc:02}"),
            turn_index: 0,
            start,
            end: start + char_len(&surface),
            surface,
        };
        dets.push(Detection::new(span, tax.category(subtype).unwrap(), DetectionSource::Dictionary));
    }
    let corpus: Vec<TranscriptDocument> = texts
        .iter()
        .map(|(i, t)| {
            let mut d = TranscriptDocument::new(format!("doc-{i:02}"));
            d.push_turn(SpeakerRole::Participant, t.clone());
            d
        })
        .collect();
    let dets = classify_all(&dets, &policy).map_err(|e| e.to_string())?;
    let planned = resolve_verdicts(&dets, &[], true).map_err(|e| e.to_string())?;
    let cfg = AnonymizationConfig::default();
    let hierarchy = GeneralizationHierarchy::default();
    let mut vault = Vault::new("acceptance-key");
    let plan = Anonymizer::new(&cfg, &hierarchy, None, &CorpusStats::compute(&corpus, &dets))
        .and_then(|a| a.plan_corpus(&corpus, &planned, &mut vault))
        .map_err(|e| e.to_string())?;
    ensure!(plan.actions.len() == 1000, "{} actions for 1000 mentions", plan.actions.len());
    let subtype_of: HashMap<&str, &str> =
        dets.iter().map(|d| (d.detection_id.as_str(), d.category.subtype.as_str())).collect();
    let mut alias_of: BTreeMap<(&str, &str), &str> = BTreeMap::new();
    for a in &plan.actions {
        let key = (subtype_of[a.detection_id.as_str()], a.original_surface.as_str());
        let prev = alias_of.insert(key, &a.replacement);
        ensure!(prev.is_none_or(|p| p == a.replacement), "{key:?} received two aliases");
    }
    let mut used: BTreeSet<(&str, &str)> = BTreeSet::new();
    for ((subtype, _), alias) in &alias_of {
        ensure!(used.insert((subtype, alias)), "alias {alias} shared by two {subtype} entities");
    }

    // Tokens.
    let mut tokens = Vault::new("token-key");
    let alphabet: Vec<char> = "abcXYZ 019_-éß漢字🙂\n\"\\".chars().collect();
    for _ in 0..1000 {
        let value: String = (0..rng.random_range(0..24)).map(|_| *alphabet.choose(&mut rng).unwrap()).collect();
        let t = tokens.tokenize(&value);
        ensure!(tokens.detokenize(&t).map_err(|e| e.to_string())? == value, "{value:?} did not round-trip");
    }

    // Dates.
    let shapes = [
        DateShape::Iso,
        DateShape::Slash { day_first: true, pad_day: true, pad_month: false },
        DateShape::DayMonthYear { pad_day: false },
    ];
    let base = NaiveDate::from_ymd_opt(1950, 1, 1).unwrap();
    let mut pairs = 0;
    for doc in 0..50 {
        let doc_id = format!("dated-{doc}");
        let mut before = Vec::new();
        let mut after = Vec::new();
        for _ in 0..rng.random_range(2..8) {
            let date = base + chrono::Duration::days(rng.random_range(0..36_500));
            let surface = render(date, *shapes.choose(&mut rng).unwrap());
            let span = TextSpan { doc_id: doc_id.clone(), turn_index: 0, start: 0, end: char_len(&surface), surface };
            let d = Detection::new(span, tax.category("date").unwrap(), DetectionSource::Rule);
            let a = perturb_date(&d, &mut vault, true).map_err(|e| e.to_string())?;
            before.push(date);
            after.push(parse_date(&a.replacement, true).ok_or("unparseable shifted date")?.date);
        }
        for i in 0..before.len() {
            for j in 0..before.len() {
                ensure!(before[i] - before[j] == after[i] - after[j], "{doc_id}: interval {i}-{j} changed");
                pairs += 1;
            }
        }
    }
    Ok(format!(
        "{} entities consistent and injective; 1000 tokens round-trip; {pairs} date intervals preserved",
        alias_of.len()
    ))
}

/// Generate a synthetic project with every plantable subtype and write a
/// config for it into `dir`.
fn synthetic_project(dir: &Path) -> Result<PathBuf, String> {
    let gen = dir.join("gen");
    let subtypes: Vec<&str> = RULE_SUBTYPES.iter().chain(GAZETTEER_SUBTYPES.iter()).copied().collect();
    sfaa(&[
        "--project",
        path_str(&gen),
        "--seed",
        "7",
        "gen-corpus",
        "--documents",
        "50",
        "--plants-per-doc",
        "5",
        "--subtypes",
        &subtypes.join(","),
    ])?;
    std::fs::write(dir.join("key"), "synthetic-key").unwrap();
    let config = dir.join("config.json");
    std::fs::write(
        &config,
        r#"{"paths": {"corpus": "gen/synthetic_corpus.jsonl", "gold": "gen/synthetic_gold.jsonl",
            "gazetteers": ["gen/synthetic_gazetteer.json"], "key_file": "key", "output": "out"}}"#,
    )
    .unwrap();
    Ok(config)
}

fn residual_guarantee() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let config = synthetic_project(dir.path())?;
    let out = dir.path().join("out");
    sfaa(&["--config", path_str(&config), "anonymize"])?;
    let written = std::fs::read_to_string(out.join(artifacts::RESIDUALS)).unwrap();
    ensure!(written.trim().is_empty(), "residuals file lists: {written}");

    let anonymized: HashMap<String, String> = read_corpus(&out.join(artifacts::ANONYMIZED))
        .into_iter()
        .map(|d| (d.doc_id.clone(), normalize_ws(&d.turns.iter().map(|t| t.text.as_str()).collect::<Vec<_>>().join("\n"))))
        .collect();
    let classified: Vec<Value> = sfaa_core::io::read_jsonl(&out.join(artifacts::CLASSIFIED)).unwrap();
    let mut checked = 0;
    for d in &classified {
        if matches!(d["risk"].as_str(), Some("Direct" | "StrongIndirect")) {
            let surface = normalize_ws(d["surface"].as_str().unwrap());
            let text = &anonymized[d["doc_id"].as_str().unwrap()];
            ensure!(!text.contains(&surface), "{surface:?} survives in {}", d["doc_id"]);
            checked += 1;
        }
    }
    ensure!(checked > 0, "no high-risk detections to check");
    Ok(format!("0 residuals over {checked} accepted high-risk detections in 50 documents"))
}

/// (turn, start, end, category index)
type Raw = (usize, usize, usize, usize);

const CATEGORIES: [(IdentifierGroup, &str); 2] =
    [(IdentifierGroup::Direct, "person-name"), (IdentifierGroup::OrganizationalVisual, "organization")];

fn raw_span(r: &Raw) -> TextSpan {
    TextSpan { doc_id: "d".into(), turn_index: r.0, start: r.1, end: r.2, surface: "x".repeat(r.2 - r.1) }
}

fn raw_category(r: &Raw) -> IdentifierCategory {
    IdentifierCategory::new(CATEGORIES[r.3].0, CATEGORIES[r.3].1)
}

/// Up to `n` non-overlapping spans over two turns.
fn random_side(rng: &mut ChaCha8Rng, n: usize) -> Vec<Raw> {
    let mut out = Vec::new();
    for turn in 0..2 {
        let mut cuts: Vec<usize> = (0..rng.random_range(0..=2 * n)).map(|_| rng.random_range(0..40)).collect();
        cuts.sort();
        cuts.dedup();
        for pair in cuts.chunks_exact(2) {
            out.push((turn, pair[0], pair[1], rng.random_range(0..2)));
        }
    }
    out.shuffle(rng);
    out.truncate(n);
    out
}

fn admissible(d: &Raw, g: &Raw, rule: &MatchRule) -> bool {
    if (rule.require_category_match && d.3 != g.3) || d.0 != g.0 {
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

/// Size of a maximum one-to-one matching, by exhaustive search.
fn optimal(dets: &[Raw], gold: &[Raw], rule: &MatchRule) -> usize {
    fn best(i: usize, used: u32, dets: &[Raw], gold: &[Raw], rule: &MatchRule, memo: &mut HashMap<(usize, u32), usize>) -> usize {
        if i == dets.len() {
            return 0;
        }
        if let Some(&v) = memo.get(&(i, used)) {
            return v;
        }
        let mut v = best(i + 1, used, dets, gold, rule, memo);
        for (j, g) in gold.iter().enumerate() {
            if used & (1 << j) == 0 && admissible(&dets[i], g, rule) {
                v = v.max(1 + best(i + 1, used | (1 << j), dets, gold, rule, memo));
            }
        }
        memo.insert((i, used), v);
        v
    }
    best(0, 0, dets, gold, rule, &mut HashMap::new())
}

fn metrics_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0x0e7a);
    let mut scored = 0;
    for case in 0..200 {
        let n = rng.random_range(0..=20);
        let d = random_side(&mut rng, n);
        let g = random_side(&mut rng, 20 - n);
        let rule = match case % 3 {
            0 => MatchRule::default(),
            1 => MatchRule {
                mode: MatchMode::Overlap { min_jaccard: rng.random_range(0.5..=1.0) },
                require_category_match: rng.random_bool(0.5),
            },
            _ => MatchRule { mode: MatchMode::Exact, require_category_match: rng.random_bool(0.5) },
        };
        let dets: Vec<Detection> =
            d.iter().map(|r| Detection::new(raw_span(r), raw_category(r), DetectionSource::Rule)).collect();
        let mut gold = GoldAnnotationSet::default();
        gold.docs.insert(
            "d".into(),
            g.iter()
                .map(|r| GoldAnnotation { span: raw_span(r), category: raw_category(r), risk: RiskClass::Direct })
                .collect(),
        );
        let c = Counts::of(&match_spans(&dets, &gold, &rule));
        let opt = optimal(&d, &g, &rule);
        ensure!(c == Counts::new(opt, d.len() - opt, g.len() - opt), "case {case}: {c:?}, optimum {opt}");
        if c.total() == 0 {
            continue;
        }
        let m = metrics(c).map_err(|e| e.to_string())?;
        let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        ensure!(m.precision == ratio(opt, d.len()), "case {case}: precision {}", m.precision);
        ensure!(m.recall == ratio(opt, g.len()), "case {case}: recall {}", m.recall);
        ensure!(m.accuracy == ratio(opt, d.len() + g.len() - opt), "case {case}: accuracy {}", m.accuracy);
        let row = identification_report(&[c], "oracle", "all");
        ensure!(row.missed_rate.den == g.len(), "case {case}: missed-rate denominator {}", row.missed_rate.den);
        ensure!(row.missed_rate.num + c.tp == row.missed_rate.den, "case {case}: recall + missed != 1");
        scored += 1;
    }
    Ok(format!("200/200 instances equal the optimum; {scored} scored with exact P/R/A and recall = 1 - missed"))
}

fn impact() -> Outcome {
    let tax = Taxonomy::default();
    let policy = RiskPolicy::default();
    let subtypes = RULE_SUBTYPES.iter().chain(GAZETTEER_SUBTYPES.iter()).map(|s| s.to_string()).collect();
    let spec = GenSpec { documents: 50, plants_per_doc: 5, subtypes, ..GenSpec::default() };
    let g = generate(7, &spec, &tax, &policy).map_err(|e| e.to_string())?;
    let rules = CompiledRules::default();
    let gaz = g.gazetteer.compile(&tax).map_err(|e| e.to_string())?;
    let found: Vec<Detection> = g
        .corpus
        .iter()
        .flat_map(|d| detect_rules(d, &rules).into_iter().chain(detect_dictionary(d, &gaz)))
        .collect();
    let merged = merge_detections(&[found], &policy);
    let classified = escalate_combinations(&classify_all(&merged, &policy).map_err(|e| e.to_string())?, &policy);
    let planned = resolve_verdicts(&classified, &[], true).map_err(|e| e.to_string())?;

    // Substitution and generalization only.
    let mut matrix = StrategyMatrix::default();
    matrix.rules.retain(|r| matches!(r.strategy.strategy, Strategy::RuleBasedSubstitution | Strategy::Generalization));
    matrix.fallback = StrategyKind::of(Technique::Pseudonym);
    let cfg = AnonymizationConfig { matrix, ..AnonymizationConfig::default() };
    let hierarchy = GeneralizationHierarchy::default();
    let mut vault = Vault::new("impact-key");
    let plan = Anonymizer::new(&cfg, &hierarchy, None, &CorpusStats::compute(&g.corpus, &classified))
        .and_then(|a| a.plan_corpus(&g.corpus, &planned, &mut vault))
        .map_err(|e| e.to_string())?;
    ensure!(
        plan.actions.iter().all(|a| matches!(a.strategy.strategy, Strategy::RuleBasedSubstitution | Strategy::Generalization)),
        "a strategy other than substitution or generalization was planned"
    );
    let (anonymized, _) = apply_corpus(&g.corpus, &plan.actions).map_err(|e| e.to_string())?;
    let lexicon = SentimentLexicon::default();
    let stopwords = Stopwords::default();
    let r = impact_report(&g.corpus, &anonymized, &lexicon, &stopwords, DEFAULT_TOP_K).map_err(|e| e.to_string())?;
    ensure!(r.word_count_delta_pct < 3.0, "word-count delta {:.3}%", r.word_count_delta_pct);
    ensure!(r.sentiment_alignment_pct >= 90.0, "sentiment alignment {:.2}%", r.sentiment_alignment_pct);
    let same = impact_report(&g.corpus, &g.corpus, &lexicon, &stopwords, DEFAULT_TOP_K).map_err(|e| e.to_string())?;
    ensure!(
        (same.word_count_delta_pct, same.topk_term_overlap_pct, same.sentiment_alignment_pct) == (0.0, 100.0, 100.0),
        "impact(x, x) = {same:?}"
    );
    Ok(format!(
        "{} actions; word delta {:.3}% < 3%, sentiment alignment {:.2}% >= 90%; impact(x, x) = (0, 100, 100)",
        plan.actions.len(),
        r.word_count_delta_pct,
        r.sentiment_alignment_pct
    ))
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let mut compared = 0;
    for (name, config) in [("worked-examples", fixture().join("config.json")), ("synthetic", synthetic_project(dir.path())?)] {
        let runs: Vec<PathBuf> = (0..3).map(|i| dir.path().join(format!("{name}-{i}"))).collect();
        for (run, jobs) in runs.iter().zip([1, 4, 4]) {
            sfaa(&["--config", path_str(&config), "--project", path_str(run), "--jobs", &jobs.to_string(), "anonymize"])?;
        }
        let first = tree(&runs[0]);
        for other in &runs[1..] {
            let t = tree(other);
            ensure!(
                first.keys().eq(t.keys()),
                "{name}: file sets differ: {:?} vs {:?}",
                first.keys().collect::<Vec<_>>(),
                t.keys().collect::<Vec<_>>()
            );
            for (k, v) in &first {
                ensure!(&t[k] == v, "{name}: {} differs between runs", k.display());
            }
        }
        compared += first.len();
    }
    Ok(format!("3 runs each (jobs 1, 4, 4) of 2 projects byte-identical over {compared} artifacts"))
}

fn batch_interactive() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let batch = dir.path().join("batch");
    worked_examples_anonymize(&batch, 1)?;

    let pipeline = Pipeline::load(Some(&fixture().join("config.json")))
        .map_err(|e| e.to_string())?
        .with_output(dir.path().join("interactive"));
    pipeline.run_ingest().map_err(|e| e.to_string())?;
    pipeline.run_detect().map_err(|e| e.to_string())?;
    pipeline.run_classify().map_err(|e| e.to_string())?;
    let mut project = Project::open(pipeline).map_err(|e| e.to_string())?;
    let mut ids = Vec::new();
    for doc in project.documents() {
        let bundle = project.bundle(&doc.doc_id).map_err(|e| e.to_string())?;
        ids.extend(bundle.detections.into_iter().map(|v| v.detection.detection_id));
    }
    for id in &ids {
        let req = VerdictRequest {
            detection_id: None,
            decision: Decision::Accept,
            strategy_override: None,
            reviewer: "acceptance".into(),
            timestamp: None,
        };
        project.submit_verdict(id, req).map_err(|e| e.to_string())?;
    }
    let id = project.id().to_string();
    project.finalize(&id, FinalizeRequest { auto_accept: false }).map_err(|e| e.to_string())?;

    let interactive = tree(project.dir());
    let batch_files = tree(&batch);
    for (name, bytes) in &batch_files {
        let other = interactive.get(name).ok_or_else(|| format!("{} missing from the project", name.display()))?;
        ensure!(other == bytes, "{} differs", name.display());
    }
    Ok(format!("{} accepted detections; all {} batch artifacts byte-identical", ids.len(), batch_files.len()))
}

fn main() {
    let criteria: [Criterion; 9] = [
        ("worked examples", Some(Duration::from_secs(10)), worked_examples),
        ("rule-detector exactness", Some(Duration::from_secs(5)), rule_exactness),
        ("hallucination filter", None, hallucination_filter),
        ("vault properties", None, vault_properties),
        ("residual guarantee", None, residual_guarantee),
        ("metrics oracle", None, metrics_oracle),
        ("scaled impact analogue", None, impact),
        ("determinism", None, determinism),
        ("batch/interactive equivalence", None, batch_interactive),
    ];
    let mut failed = 0;
    for (name, budget, check) in criteria {
        let started = Instant::now();
        let mut outcome = check();
        let elapsed = started.elapsed();
        if let (Ok(detail), Some(limit)) = (&outcome, budget) {
            if elapsed > limit {
                outcome = Err(format!("{detail}, but took {elapsed:.2?} (limit {limit:?})"));
            }
        }
        match outcome {
            Ok(detail) => println!("PASS  {name}: {detail} [{elapsed:.2?}]"),
            Err(why) => {
                failed += 1;
                println!("FAIL  {name}: {why} [{elapsed:.2?}]");
            }
        }
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
