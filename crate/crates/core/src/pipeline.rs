//! Stage-by-stage driver shared by the command-line tool and the review
//! service.
//!
//! Every stage reads the previous stage's files from the output directory
//! and writes its own, so a detections file can be edited by hand between
//! `detect` and `classify`. Document-level work runs on `jobs` threads;
//! results are collected in input order, so output never depends on the
//! thread count.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};

use serde::{Deserialize, Serialize};

use crate::anonymization::{
    apply_plan, resolve_verdicts, residual_sweep, AnonymizationConfig, Anonymizer, CorpusStats, GeneralizationHierarchy,
    Plan, PlanEvent, PlannedDetection, Residual, Vault,
};
use crate::classification::{classify_all, escalate_combinations, RiskPolicy};
use crate::detection::{
    detect_dictionary, detect_llm, detect_rules, merge_detections, CompiledGazetteer, CompiledRules, DroppedItem,
    Gazetteer, PromptTemplate, RulePack,
};
use crate::error::{Error, Result};
use crate::evaluation::{
    evaluate_backend, impact_report, strategy_breakdown, EvaluationReport, MatchRule, SentimentLexicon, Stopwords,
    DEFAULT_TOP_K,
};
use crate::ingestion::{
    load_gold, parse_transcript, read_corpus, scrub_metadata, IngestFormat, SensitiveKeys, SpeakerAliases,
};
use crate::gencorpus::{generate, GenSpec, GeneratedCorpus};
use crate::io;
use crate::llm::{build_client, LlmClient, LlmConfig};
use crate::model::{
    AnonymizationAction, AuditRecord, Detection, DetectionRecord, GoldAnnotationSet, Strategy, TranscriptDocument,
    Verdict,
};
use crate::taxonomy::Taxonomy;

/// File names inside the output directory.
pub mod artifacts {
    pub const CORPUS: &str = "corpus.jsonl";
    pub const DETECTIONS: &str = "detections.jsonl";
    pub const BACKENDS_DIR: &str = "backends";
    pub const LLM_DROPPED: &str = "llm_dropped.jsonl";
    pub const CLASSIFIED: &str = "classified.jsonl";
    pub const VERDICTS: &str = "verdicts.jsonl";
    pub const PLAN: &str = "plan.jsonl";
    pub const EVENTS: &str = "events.jsonl";
    pub const ANONYMIZED: &str = "anonymized.jsonl";
    pub const AUDIT: &str = "audit.jsonl";
    pub const RESIDUALS: &str = "residuals.jsonl";
    pub const VAULT: &str = "vault.json";
    pub const SNAPSHOT: &str = "config.snapshot.json";
    pub const REPORT_JSON: &str = "reports/evaluation.json";
    pub const REPORT_TEXT: &str = "reports/evaluation.txt";
}

/// Files written by `gen-corpus`.
pub const GENERATED_CORPUS: &str = "synthetic_corpus.jsonl";
pub const GENERATED_GOLD: &str = "synthetic_gold.jsonl";
pub const GENERATED_GAZETTEER: &str = "synthetic_gazetteer.json";
pub const GENERATED_SPEC: &str = "synthetic_spec.json";

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Environment variable naming the vault key file.
pub const ENV_KEYFILE: &str = "SFAA_VAULT_KEYFILE";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    /// A corpus file (one JSON document per line) or a directory of
    /// transcript files.
    pub corpus: PathBuf,
    pub gold: Option<PathBuf>,
    pub taxonomy: Option<PathBuf>,
    pub rules: Option<PathBuf>,
    pub gazetteers: Vec<PathBuf>,
    /// Overlays applied on top of the shipped generalization hierarchy.
    pub hierarchies: Vec<PathBuf>,
    /// Defaults to `vault.json` in the output directory.
    pub vault: Option<PathBuf>,
    pub key_file: Option<PathBuf>,
    pub lexicon: Option<PathBuf>,
    pub stopwords: Option<PathBuf>,
    pub output: PathBuf,
}

impl Default for Paths {
    fn default() -> Self {
        Paths {
            corpus: "transcripts".into(),
            gold: None,
            taxonomy: None,
            rules: None,
            gazetteers: Vec::new(),
            hierarchies: Vec::new(),
            vault: None,
            key_file: None,
            lexicon: None,
            stopwords: None,
            output: "out".into(),
        }
    }
}

impl Paths {
    fn resolve(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.corpus);
        fix(&mut self.output);
        for p in [&mut self.gold, &mut self.taxonomy, &mut self.rules, &mut self.vault, &mut self.key_file]
            .into_iter()
            .chain([&mut self.lexicon, &mut self.stopwords])
            .flatten()
        {
            fix(p);
        }
        self.gazetteers.iter_mut().chain(self.hierarchies.iter_mut()).for_each(fix);
    }
}

/// Which detection backends run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Backends {
    pub rules: bool,
    pub dictionary: bool,
    pub llm: bool,
}

impl Default for Backends {
    fn default() -> Self {
        Backends {
            rules: true,
            dictionary: true,
            llm: false,
        }
    }
}

impl Backends {
    /// Parse a comma-separated list such as `rules,llm`.
    pub fn parse_csv(s: &str) -> Result<Self> {
        let mut b = Backends {
            rules: false,
            dictionary: false,
            llm: false,
        };
        for name in s.split(',').map(str::trim).filter(|n| !n.is_empty()) {
            match name {
                "rules" => b.rules = true,
                "dictionary" => b.dictionary = true,
                "llm" => b.llm = true,
                other => {
                    return Err(Error::Config(format!(
                        "unknown backend {other:?}; expected rules, dictionary or llm"
                    )))
                }
            }
        }
        if !(b.rules || b.dictionary || b.llm) {
            return Err(Error::Config("no detection backend selected".into()));
        }
        Ok(b)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
#[derive(Default)]
pub struct IngestOptions {
    /// Transcript file format; guessed from the extension when absent.
    pub format: Option<IngestFormat>,
    pub speakers: SpeakerAliases,
    pub sensitive_keys: SensitiveKeys,
}


#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectOptions {
    /// Largest prompt text per model request, in characters.
    pub chunk_chars: usize,
    pub prompt: PromptTemplate,
}

impl Default for DetectOptions {
    fn default() -> Self {
        DetectOptions {
            chunk_chars: 4000,
            prompt: PromptTemplate::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluationOptions {
    pub top_k: usize,
    /// Further detection files to score alongside the pipeline's own
    /// backends, by display name (for example a manual annotation pass).
    pub extra_detections: BTreeMap<String, PathBuf>,
}

impl Default for EvaluationOptions {
    fn default() -> Self {
        EvaluationOptions {
            top_k: DEFAULT_TOP_K,
            extra_detections: BTreeMap::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Seeds {
    pub corpus: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub paths: Paths,
    pub backends: Backends,
    pub ingest: IngestOptions,
    pub detection: DetectOptions,
    pub llm: LlmConfig,
    /// Send context-aware rewrites to the model. When off, rewrites fall back
    /// to substitution.
    pub rewrite_with_llm: bool,
    pub policy: RiskPolicy,
    pub anonymization: AnonymizationConfig,
    pub match_rule: MatchRule,
    pub evaluation: EvaluationOptions,
    pub seeds: Seeds,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            paths: Paths::default(),
            backends: Backends::default(),
            ingest: IngestOptions::default(),
            detection: DetectOptions::default(),
            llm: LlmConfig::default(),
            rewrite_with_llm: true,
            policy: RiskPolicy::default(),
            anonymization: AnonymizationConfig::default(),
            match_rule: MatchRule::default(),
            evaluation: EvaluationOptions::default(),
            seeds: Seeds::default(),
        }
    }
}

impl PipelineConfig {
    /// Strict parse: unknown keys anywhere are rejected.
    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        PipelineConfig::from_json(&io::read_to_string(path)?).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }
}

/// Written into every output directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigSnapshot {
    pub tool: String,
    pub version: String,
    /// Directory the configuration's relative paths are resolved against.
    pub base_dir: PathBuf,
    pub config: PipelineConfig,
}

/// Run `f` over `items` on up to `jobs` threads, keeping input order.
pub fn par_map<T: Sync, R: Send>(items: &[T], jobs: usize, f: impl Fn(&T) -> R + Sync) -> Vec<R> {
    if jobs <= 1 || items.len() <= 1 {
        return items.iter().map(f).collect();
    }
    let next = AtomicUsize::new(0);
    let mut slots: Vec<Option<R>> = std::iter::repeat_with(|| None).take(items.len()).collect();
    std::thread::scope(|s| {
        let workers: Vec<_> = (0..jobs.min(items.len()))
            .map(|_| {
                s.spawn(|| {
                    let mut done = Vec::new();
                    loop {
                        let i = next.fetch_add(1, Ordering::Relaxed);
                        if i >= items.len() {
                            break done;
                        }
                        done.push((i, f(&items[i])));
                    }
                })
            })
            .collect();
        for w in workers {
            match w.join() {
                Ok(done) => done.into_iter().for_each(|(i, r)| slots[i] = Some(r)),
                Err(panic) => std::panic::resume_unwind(panic),
            }
        }
    });
    slots.into_iter().map(|r| r.expect("every index is claimed once")).collect()
}

/// Output of the detection stage.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Detected {
    pub merged: Vec<Detection>,
    /// Raw output per backend name, before merging.
    pub by_backend: BTreeMap<String, Vec<Detection>>,
    pub dropped: Vec<DroppedItem>,
    pub llm_requests: usize,
}

/// What `finalize` produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinalizeSummary {
    pub documents: usize,
    pub actions: usize,
    pub events: usize,
    pub residuals: Vec<Residual>,
    pub report_written: bool,
}

/// A loaded configuration with its compiled rules, gazetteer and hierarchy.
pub struct Pipeline {
    pub config: PipelineConfig,
    snapshot: PipelineConfig,
    base_dir: PathBuf,
    pub jobs: usize,
    pub taxonomy: Taxonomy,
    rules: CompiledRules,
    gazetteer: CompiledGazetteer,
    pub hierarchy: GeneralizationHierarchy,
}

fn read_detections(path: &Path) -> Result<Vec<Detection>> {
    let records: Vec<DetectionRecord> = io::read_jsonl(path)?;
    records
        .into_iter()
        .enumerate()
        .map(|(i, r)| {
            Detection::try_from(r).map_err(|message| Error::MalformedInput {
                line: i + 1,
                message: format!("{}: {message}", path.display()),
            })
        })
        .collect()
}

fn write_detections(path: &Path, detections: &[Detection]) -> Result<()> {
    let records: Vec<DetectionRecord> = detections.iter().cloned().map(DetectionRecord::from).collect();
    write_jsonl(path, &records)
}

fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<()> {
    io::write_atomic(path, io::to_jsonl(items)?.as_bytes())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    io::write_atomic(path, text.as_bytes())
}

impl Pipeline {
    /// Load a configuration file, resolving its relative paths against the
    /// file's directory. Without a file the defaults apply, relative to the
    /// current directory.
    pub fn load(config: Option<&Path>) -> Result<Self> {
        match config {
            Some(path) => {
                let cfg = PipelineConfig::load(path)?;
                let base = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
                Pipeline::new(cfg, base)
            }
            None => Pipeline::new(PipelineConfig::default(), Path::new(".")),
        }
    }

    /// Apply environment overrides, resolve paths against `base` and compile
    /// the detectors.
    pub fn new(mut config: PipelineConfig, base: &Path) -> Result<Self> {
        config.llm.apply_env();
        if let Ok(k) = std::env::var(ENV_KEYFILE) {
            if !k.is_empty() {
                config.paths.key_file = Some(k.into());
            }
        }
        let snapshot = config.clone();
        let base_dir = std::path::absolute(base).map_err(|e| Error::io(base, e))?;
        let base = base_dir.as_path();
        config.paths.resolve(base);
        config.llm.resolve_paths(base);
        config.evaluation.extra_detections.values_mut().for_each(|p| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        });
        config.llm.validate().map_err(|m| Error::Config(format!("llm: {m}")))?;

        let taxonomy = match &config.paths.taxonomy {
            Some(p) => Taxonomy::from_json(&io::read_to_string(p)?)?,
            None => Taxonomy::default(),
        };
        config.policy.validate(&taxonomy)?;
        let rules = match &config.paths.rules {
            Some(p) => io::read_json::<RulePack>(p)?.compile()?,
            None => RulePack::default().compile()?,
        };
        let mut gaz = Gazetteer::default();
        for p in &config.paths.gazetteers {
            gaz.extend(io::read_json(p)?);
        }
        let gazetteer = gaz.compile(&taxonomy)?;
        let mut hierarchy = GeneralizationHierarchy::default();
        for p in &config.paths.hierarchies {
            hierarchy.extend(GeneralizationHierarchy::load(p)?);
        }
        Ok(Pipeline {
            config,
            snapshot,
            base_dir,
            jobs: 1,
            taxonomy,
            rules,
            gazetteer,
            hierarchy,
        })
    }

    /// Reopen the configuration recorded in a project directory; artifacts
    /// stay in that directory.
    pub fn from_snapshot(project_dir: &Path) -> Result<Self> {
        let snap: ConfigSnapshot = io::read_json(&project_dir.join(artifacts::SNAPSHOT))?;
        Ok(Pipeline::new(snap.config, &snap.base_dir)?.with_output(project_dir))
    }

    pub fn with_jobs(mut self, jobs: usize) -> Self {
        self.jobs = jobs.max(1);
        self
    }

    pub fn with_backends(mut self, backends: Backends) -> Self {
        self.config.backends = backends;
        self.snapshot.backends = backends;
        self
    }

    /// Redirect all artifacts to `dir`.
    pub fn with_output(mut self, dir: impl Into<PathBuf>) -> Self {
        self.config.paths.output = dir.into();
        self
    }

    pub fn output_dir(&self) -> &Path {
        &self.config.paths.output
    }

    pub fn artifact(&self, name: &str) -> PathBuf {
        self.config.paths.output.join(name)
    }

    pub fn vault_path(&self) -> PathBuf {
        self.config.paths.vault.clone().unwrap_or_else(|| self.artifact(artifacts::VAULT))
    }

    pub fn snapshot(&self) -> ConfigSnapshot {
        ConfigSnapshot {
            tool: "sfaa".into(),
            version: TOOL_VERSION.into(),
            base_dir: self.base_dir.clone(),
            config: self.snapshot.clone(),
        }
    }

    pub fn write_snapshot(&self) -> Result<()> {
        write_json(&self.artifact(artifacts::SNAPSHOT), &self.snapshot())
    }

    pub fn client(&self) -> Result<Box<dyn LlmClient>> {
        Ok(build_client(&self.config.llm)?)
    }

    /// The vault key, read from the configured key file.
    pub fn secret_key(&self) -> Result<Vec<u8>> {
        let path = self.config.paths.key_file.as_ref().ok_or_else(|| {
            Error::Config(format!("no vault key: set paths.key_file or {ENV_KEYFILE}"))
        })?;
        let raw = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        let key = raw.trim_ascii_end().to_vec();
        if key.is_empty() {
            return Err(Error::Config(format!("vault key file {} is empty", path.display())));
        }
        Ok(key)
    }

    /// Read the configured corpus: a corpus file, or a directory whose files
    /// are transcripts named by document id.
    pub fn ingest(&self) -> Result<Vec<TranscriptDocument>> {
        let src = &self.config.paths.corpus;
        if !src.is_dir() {
            return read_corpus(src);
        }
        let mut files: Vec<PathBuf> = std::fs::read_dir(src)
            .map_err(|e| Error::io(src, e))?
            .map(|e| e.map(|e| e.path()).map_err(|err| Error::io(src, err)))
            .collect::<Result<_>>()?;
        files.retain(|p| p.is_file() && !p.file_name().is_some_and(|n| n.to_string_lossy().starts_with('.')));
        files.sort();
        files
            .iter()
            .map(|p| {
                let format = self.config.ingest.format.unwrap_or_else(|| IngestFormat::from_path(p));
                let doc_id = p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
                let raw = std::fs::read(p).map_err(|e| Error::io(p, e))?;
                parse_transcript(&raw, format, &doc_id, &self.config.ingest.speakers)
            })
            .collect()
    }

    /// Run the enabled backends on every document and merge their output.
    /// `client` is required when the model backend is enabled.
    pub fn detect(&self, corpus: &[TranscriptDocument], client: Option<&dyn LlmClient>) -> Result<Detected> {
        let b = self.config.backends;
        if b.llm && client.is_none() {
            return Err(Error::Config("the llm backend is enabled but no client was supplied".into()));
        }
        type PerDoc = (Vec<Detection>, Vec<Detection>, Vec<Detection>, Vec<DroppedItem>, usize, Vec<Detection>);
        let per_doc: Vec<Result<PerDoc>> = par_map(corpus, self.jobs, |doc| {
            let rules = if b.rules { detect_rules(doc, &self.rules) } else { Vec::new() };
            let dict = if b.dictionary { detect_dictionary(doc, &self.gazetteer) } else { Vec::new() };
            let (llm, dropped, requests) = match client.filter(|_| b.llm) {
                Some(c) => {
                    let out = detect_llm(doc, c, &self.config.detection.prompt, self.config.detection.chunk_chars, &self.taxonomy)?;
                    (out.detections, out.dropped, out.requests)
                }
                None => (Vec::new(), Vec::new(), 0),
            };
            let (_, meta) = scrub_metadata(doc, &self.config.ingest.sensitive_keys);
            Ok((rules, dict, llm, dropped, requests, meta))
        });
        let mut out = Detected::default();
        let mut sets = Vec::new();
        for r in per_doc {
            let (rules, dict, llm, dropped, requests, meta) = r?;
            for (name, on, set) in [("rules", b.rules, &rules), ("dictionary", b.dictionary, &dict), ("llm", b.llm, &llm)] {
                if on {
                    out.by_backend.entry(name.to_string()).or_default().extend(set.iter().cloned());
                }
            }
            out.dropped.extend(dropped);
            out.llm_requests += requests;
            sets.push(merge_detections(&[rules, dict, llm, meta], &self.config.policy));
        }
        out.merged = sets.into_iter().flatten().collect();
        Ok(out)
    }

    /// Assign risk classes, then escalate co-occurring weak identifiers.
    pub fn classify(&self, detections: &[Detection]) -> Result<Vec<Detection>> {
        Ok(escalate_combinations(&classify_all(detections, &self.config.policy)?, &self.config.policy))
    }

    /// Resolve verdicts and plan every document.
    pub fn plan(
        &self,
        corpus: &[TranscriptDocument],
        classified: &[Detection],
        verdicts: &[Verdict],
        auto_accept: bool,
        vault: &mut Vault,
        client: Option<&dyn LlmClient>,
    ) -> Result<(Plan, Vec<PlannedDetection>)> {
        let planned = resolve_verdicts(classified, verdicts, auto_accept)?;
        let accepted: Vec<Detection> = planned.iter().map(|p| p.detection.clone()).collect();
        let stats = CorpusStats::compute(corpus, &accepted);
        let anonymizer = Anonymizer::new(&self.config.anonymization, &self.hierarchy, client, &stats)?;
        let plan = anonymizer.plan_corpus(corpus, &planned, vault)?;
        Ok((plan, planned))
    }

    /// Apply a plan document by document. Same result as
    /// [`crate::anonymization::apply_corpus`], spread over `jobs` threads.
    pub fn apply(
        &self,
        corpus: &[TranscriptDocument],
        actions: &[AnonymizationAction],
    ) -> Result<(Vec<TranscriptDocument>, Vec<AuditRecord>)> {
        let mut by_doc: BTreeMap<&str, Vec<AnonymizationAction>> = BTreeMap::new();
        for a in actions {
            by_doc.entry(a.applied_span.doc_id.as_str()).or_default().push(a.clone());
        }
        if let Some(id) = by_doc.keys().find(|id| !corpus.iter().any(|d| d.doc_id == **id)) {
            return Err(Error::NotFound(format!("plan refers to unknown document {id}")));
        }
        let empty = Vec::new();
        let docs = par_map(corpus, self.jobs, |doc| {
            apply_plan(doc, by_doc.get(doc.doc_id.as_str()).unwrap_or(&empty))
        });
        let docs = docs.into_iter().collect::<Result<Vec<_>>>()?;
        let audit = corpus
            .iter()
            .flat_map(|d| by_doc.get(d.doc_id.as_str()).unwrap_or(&empty))
            .map(AuditRecord::from)
            .collect();
        Ok((docs, audit))
    }

    fn read_corpus_artifact(&self) -> Result<Vec<TranscriptDocument>> {
        read_corpus(&self.artifact(artifacts::CORPUS))
    }

    /// Read the verdict log, or an empty log if none exists yet.
    pub fn read_verdicts(&self) -> Result<Vec<Verdict>> {
        let path = self.artifact(artifacts::VERDICTS);
        if path.exists() {
            io::read_jsonl(&path)
        } else {
            Ok(Vec::new())
        }
    }

    pub fn read_classified(&self) -> Result<Vec<Detection>> {
        read_detections(&self.artifact(artifacts::CLASSIFIED))
    }

    pub fn read_corpus(&self) -> Result<Vec<TranscriptDocument>> {
        self.read_corpus_artifact()
    }

    /// `ingest`: copy the corpus into the output directory in canonical form.
    pub fn run_ingest(&self) -> Result<usize> {
        let corpus = self.ingest()?;
        self.write_snapshot()?;
        write_jsonl(&self.artifact(artifacts::CORPUS), &corpus)?;
        Ok(corpus.len())
    }

    /// `detect`: merged detections plus each backend's raw output.
    pub fn run_detect(&self) -> Result<Detected> {
        let corpus = self.read_corpus_artifact()?;
        let client = if self.config.backends.llm { Some(self.client()?) } else { None };
        let detected = self.detect(&corpus, client.as_deref())?;
        self.write_snapshot()?;
        let dir = self.artifact(artifacts::BACKENDS_DIR);
        if dir.is_dir() {
            std::fs::remove_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        }
        for (name, set) in &detected.by_backend {
            write_detections(&dir.join(format!("{name}.jsonl")), set)?;
        }
        write_detections(&self.artifact(artifacts::DETECTIONS), &detected.merged)?;
        write_jsonl(&self.artifact(artifacts::LLM_DROPPED), &detected.dropped)?;
        Ok(detected)
    }

    /// `classify`: reads the (possibly hand-edited) detections file.
    pub fn run_classify(&self) -> Result<Vec<Detection>> {
        let detections = read_detections(&self.artifact(artifacts::DETECTIONS))?;
        let classified = self.classify(&detections)?;
        self.write_snapshot()?;
        write_detections(&self.artifact(artifacts::CLASSIFIED), &classified)?;
        Ok(classified)
    }

    /// The model client used for context-aware rewriting, if enabled.
    pub fn rewrite_client(&self) -> Result<Option<Box<dyn LlmClient>>> {
        if self.config.rewrite_with_llm {
            Ok(Some(self.client()?))
        } else {
            Ok(None)
        }
    }

    /// `plan`: fold the verdict log into the classified detections and
    /// write the plan, its events and the updated vault.
    pub fn run_plan(&self, auto_accept: bool) -> Result<(Plan, Vec<PlannedDetection>)> {
        let corpus = self.read_corpus_artifact()?;
        let classified = self.read_classified()?;
        let verdicts = self.read_verdicts()?;
        let vault_path = self.vault_path();
        let mut vault = Vault::load_or_new(&vault_path, self.secret_key()?)?;
        let client = self.rewrite_client()?;
        let (plan, planned) = self.plan(&corpus, &classified, &verdicts, auto_accept, &mut vault, client.as_deref())?;
        self.write_snapshot()?;
        vault.save(&vault_path)?;
        write_jsonl(&self.artifact(artifacts::PLAN), &plan.actions)?;
        write_jsonl(&self.artifact(artifacts::EVENTS), &plan.events)?;
        Ok((plan, planned))
    }

    /// Anonymize in memory with the current verdicts, treating unreviewed
    /// detections as accepted. Nothing is written; the persisted vault is
    /// read but not updated, so aliases match what `finalize` would mint.
    pub fn preview(
        &self,
        corpus: &[TranscriptDocument],
        classified: &[Detection],
        verdicts: &[Verdict],
    ) -> Result<Vec<TranscriptDocument>> {
        let mut vault = Vault::load_or_new(&self.vault_path(), self.secret_key()?)?;
        let client = self.rewrite_client()?;
        let (plan, _) = self.plan(corpus, classified, verdicts, true, &mut vault, client.as_deref())?;
        Ok(self.apply(corpus, &plan.actions)?.0)
    }

    /// `apply`: execute the written plan.
    pub fn run_apply(&self) -> Result<usize> {
        let corpus = self.read_corpus_artifact()?;
        let actions: Vec<AnonymizationAction> = io::read_jsonl(&self.artifact(artifacts::PLAN))?;
        let (docs, audit) = self.apply(&corpus, &actions)?;
        self.write_snapshot()?;
        write_jsonl(&self.artifact(artifacts::ANONYMIZED), &docs)?;
        write_jsonl(&self.artifact(artifacts::AUDIT), &audit)?;
        Ok(docs.len())
    }

    /// Plan, apply, sweep for residual high-risk surfaces and, when a
    /// reference set is configured, evaluate. The batch `anonymize` command
    /// and the review service both end here.
    pub fn finalize(&self, auto_accept: bool) -> Result<FinalizeSummary> {
        let (plan, planned) = self.run_plan(auto_accept)?;
        let documents = self.run_apply()?;
        let anonymized: Vec<TranscriptDocument> = read_corpus(&self.artifact(artifacts::ANONYMIZED))?;
        let residuals = residual_sweep(&anonymized, &planned);
        write_jsonl(&self.artifact(artifacts::RESIDUALS), &residuals)?;
        let report_written = if self.config.paths.gold.is_some() {
            self.run_evaluate()?;
            true
        } else {
            false
        };
        Ok(FinalizeSummary {
            documents,
            actions: plan.actions.len(),
            events: plan.events.len(),
            residuals,
            report_written,
        })
    }

    /// `anonymize`: ingest, detect, classify, then finalize with every
    /// detection accepted.
    pub fn run_anonymize(&self) -> Result<FinalizeSummary> {
        self.run_ingest()?;
        self.run_detect()?;
        self.run_classify()?;
        let verdicts = self.artifact(artifacts::VERDICTS);
        if verdicts.exists() {
            std::fs::remove_file(&verdicts).map_err(|e| Error::io(&verdicts, e))?;
        }
        self.finalize(true)
    }

    fn load_gold(&self, corpus: &[TranscriptDocument]) -> Result<GoldAnnotationSet> {
        let path = self
            .config
            .paths
            .gold
            .as_ref()
            .ok_or(Error::MissingGold)?;
        if !path.exists() {
            log::warn!("gold file {} does not exist", path.display());
            return Err(Error::MissingGold);
        }
        load_gold(path, corpus)
    }

    /// Detection sets to score, by display name: the merged (and classified)
    /// set first, then each backend, then configured extras.
    fn evaluation_sets(&self) -> Result<Vec<(String, Vec<Detection>)>> {
        let mut sets = Vec::new();
        let classified = self.artifact(artifacts::CLASSIFIED);
        let merged = if classified.exists() {
            read_detections(&classified)?
        } else {
            self.classify(&read_detections(&self.artifact(artifacts::DETECTIONS))?)?
        };
        sets.push(("combined".to_string(), merged));
        let dir = self.artifact(artifacts::BACKENDS_DIR);
        if dir.is_dir() {
            let mut files: Vec<PathBuf> = std::fs::read_dir(&dir)
                .map_err(|e| Error::io(&dir, e))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.extension().is_some_and(|x| x == "jsonl"))
                .collect();
            files.sort();
            for f in files {
                let name = f.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
                sets.push((name, self.classify(&read_detections(&f)?)?));
            }
        }
        for (name, path) in &self.config.evaluation.extra_detections {
            let ds = read_detections(path)?;
            let ds = if ds.iter().all(|d| d.risk.is_some()) { ds } else { self.classify(&ds)? };
            sets.push((name.clone(), ds));
        }
        Ok(sets)
    }

    /// Score every detection set against the reference annotations; add
    /// per-strategy scores when a plan exists and impact figures when an
    /// anonymized corpus exists.
    pub fn evaluate(&self) -> Result<EvaluationReport> {
        let corpus = self.read_corpus_artifact()?;
        let gold = self.load_gold(&corpus)?;
        let rule = &self.config.match_rule;
        let sets = self.evaluation_sets()?;
        let backends = sets
            .iter()
            .map(|(name, ds)| evaluate_backend(name, &corpus, ds, &gold, rule))
            .collect();

        let plan_path = self.artifact(artifacts::PLAN);
        let per_strategy = if plan_path.exists() {
            let actions: Vec<AnonymizationAction> = io::read_jsonl(&plan_path)?;
            let by_id: BTreeMap<&str, &Detection> = sets[0].1.iter().map(|d| (d.detection_id.as_str(), d)).collect();
            let routed: Vec<(Detection, Strategy)> = actions
                .iter()
                .flat_map(|a| a.detection_id.split('+').map(move |id| (id, a.strategy.strategy)))
                .filter_map(|(id, s)| by_id.get(id).map(|d| ((*d).clone(), s)))
                .collect();
            strategy_breakdown(&routed, &gold, &self.config.anonymization.matrix, rule)
        } else {
            Vec::new()
        };

        let anonymized_path = self.artifact(artifacts::ANONYMIZED);
        let impact = if anonymized_path.exists() {
            let lexicon = match &self.config.paths.lexicon {
                Some(p) => SentimentLexicon::load(p)?,
                None => SentimentLexicon::default(),
            };
            let stopwords = match &self.config.paths.stopwords {
                Some(p) => Stopwords::load(p)?,
                None => Stopwords::default(),
            };
            let anonymized = read_corpus(&anonymized_path)?;
            Some(impact_report(&corpus, &anonymized, &lexicon, &stopwords, self.config.evaluation.top_k)?)
        } else {
            None
        };
        Ok(EvaluationReport::new(backends, per_strategy, impact))
    }

    /// `evaluate`: write the report as JSON and as an aligned-text table.
    /// Nothing is written when the reference set is missing.
    pub fn run_evaluate(&self) -> Result<EvaluationReport> {
        let report = self.evaluate()?;
        self.write_snapshot()?;
        write_json(&self.artifact(artifacts::REPORT_JSON), &report)?;
        io::write_atomic(&self.artifact(artifacts::REPORT_TEXT), report.render_text().as_bytes())?;
        Ok(report)
    }

    /// `report`: render the latest evaluation report as text.
    pub fn run_report(&self) -> Result<String> {
        let report: EvaluationReport = io::read_json(&self.artifact(artifacts::REPORT_JSON))?;
        Ok(report.render_text())
    }

    /// `gen-corpus`: write a synthetic corpus, its reference annotations and
    /// a gazetteer of the planted names into the output directory.
    pub fn run_gen_corpus(&self, spec: &GenSpec, seed: u64) -> Result<GeneratedCorpus> {
        let generated = generate(seed, spec, &self.taxonomy, &self.config.policy)?;
        write_jsonl(&self.artifact(GENERATED_CORPUS), &generated.corpus)?;
        write_jsonl(&self.artifact(GENERATED_GOLD), &generated.gold.to_documents())?;
        write_json(&self.artifact(GENERATED_GAZETTEER), &generated.gazetteer)?;
        write_json(&self.artifact(GENERATED_SPEC), &serde_json::json!({ "seed": seed, "spec": spec }))?;
        Ok(generated)
    }

    pub fn read_events(&self) -> Result<Vec<PlanEvent>> {
        io::read_jsonl(&self.artifact(artifacts::EVENTS))
    }
}
