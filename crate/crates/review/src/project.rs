//! Project state on disk and the operations the HTTP layer exposes.
//!
//! A project is a pipeline output directory. Besides the stage artifacts it
//! holds `project.json` (state and transition history), the append-only
//! verdict log and, once finalized, `finalize.json`.

use std::fmt;
use std::fs::OpenOptions;
use std::io::Write;
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use sfaa_core::anonymization::select_strategy;
use sfaa_core::io;
use sfaa_core::model::{Decision, Detection, DetectionRecord, StrategyKind, TranscriptDocument, Turn, Verdict};
use sfaa_core::pipeline::{artifacts, FinalizeSummary, Pipeline};
use sfaa_core::{Error, Result};

pub const PROJECT_FILE: &str = "project.json";
pub const FINALIZE_FILE: &str = "finalize.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ProjectState {
    Ingested,
    Detected,
    Classified,
    UnderReview,
    Finalized,
}

impl fmt::Display for ProjectState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

/// One audited state transition.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StateChange {
    pub from: Option<ProjectState>,
    pub to: ProjectState,
    pub at: DateTime<Utc>,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProjectFile {
    pub project_id: String,
    pub corpus: PathBuf,
    pub state: ProjectState,
    pub history: Vec<StateChange>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DocumentSummary {
    pub doc_id: String,
    pub case_label: String,
    pub turns: usize,
    pub detections: usize,
    pub reviewed: usize,
    pub state: ProjectState,
}

/// A detection as shown to a reviewer: its current form (after any
/// reclassification), proposed strategy and latest verdict.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionView {
    pub detection: DetectionRecord,
    pub proposed_strategy: StrategyKind,
    pub verdict: Option<Verdict>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TurnPreview {
    pub turn: usize,
    pub original: String,
    pub anonymized: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReviewBundle {
    pub doc_id: String,
    pub state: ProjectState,
    pub turns: Vec<Turn>,
    /// Sorted by turn, then start offset.
    pub detections: Vec<DetectionView>,
    /// Every verdict for this document, superseded ones included.
    pub verdicts: Vec<Verdict>,
    pub preview: Vec<TurnPreview>,
}

/// Body of a verdict submission; the detection id comes from the URL.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerdictRequest {
    #[serde(default)]
    pub detection_id: Option<String>,
    pub decision: Decision,
    #[serde(default)]
    pub strategy_override: Option<StrategyKind>,
    pub reviewer: String,
    #[serde(default)]
    pub timestamp: Option<DateTime<Utc>>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FinalizeRequest {
    /// Accept detections that have no verdict.
    pub auto_accept: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinalizeResponse {
    pub project_id: String,
    pub state: ProjectState,
    pub summary: FinalizeSummary,
    pub anonymized: PathBuf,
    pub audit: PathBuf,
    pub report: Option<PathBuf>,
}

/// An open project. Methods taking `&mut self` are the mutations; callers
/// serialize them.
pub struct Project {
    pipeline: Pipeline,
    file: ProjectFile,
    corpus: Vec<TranscriptDocument>,
    detections: Vec<Detection>,
    verdicts: Vec<Verdict>,
}

fn infer_state(dir: &Path) -> ProjectState {
    if dir.join(artifacts::CLASSIFIED).exists() {
        ProjectState::Classified
    } else if dir.join(artifacts::DETECTIONS).exists() {
        ProjectState::Detected
    } else {
        ProjectState::Ingested
    }
}

fn corrupt(e: Error) -> Error {
    match e {
        Error::CorruptProject(_) => e,
        other => Error::CorruptProject(other.to_string()),
    }
}

impl Project {
    /// Open the project in the pipeline's output directory. A classified
    /// project moves to `UnderReview`.
    pub fn open(pipeline: Pipeline) -> Result<Self> {
        let dir = pipeline.output_dir().to_path_buf();
        let corpus_path = dir.join(artifacts::CORPUS);
        if !corpus_path.is_file() {
            return Err(Error::CorruptProject(format!("{} is missing", corpus_path.display())));
        }
        let corpus = pipeline.read_corpus().map_err(corrupt)?;
        let file_path = dir.join(PROJECT_FILE);
        let file = if file_path.exists() {
            io::read_json(&file_path).map_err(corrupt)?
        } else {
            let state = infer_state(&dir);
            let project_id = dir
                .file_name()
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_else(|| "project".into());
            ProjectFile {
                project_id,
                corpus: PathBuf::from(artifacts::CORPUS),
                state,
                history: vec![StateChange {
                    from: None,
                    to: state,
                    at: Utc::now(),
                    reason: "project opened".into(),
                }],
            }
        };
        let detections = if file.state >= ProjectState::Classified {
            pipeline.read_classified().map_err(corrupt)?
        } else {
            Vec::new()
        };
        let verdicts = pipeline.read_verdicts().map_err(corrupt)?;
        let mut p = Project {
            pipeline,
            file,
            corpus,
            detections,
            verdicts,
        };
        if p.file.state == ProjectState::Classified {
            p.transition(ProjectState::UnderReview, "review started")?;
        } else {
            p.save_file()?;
        }
        Ok(p)
    }

    pub fn id(&self) -> &str {
        &self.file.project_id
    }

    pub fn state(&self) -> ProjectState {
        self.file.state
    }

    pub fn history(&self) -> &[StateChange] {
        &self.file.history
    }

    pub fn dir(&self) -> &Path {
        self.pipeline.output_dir()
    }

    fn save_file(&self) -> Result<()> {
        let mut text = serde_json::to_string_pretty(&self.file)?;
        text.push('\n');
        io::write_atomic(&self.dir().join(PROJECT_FILE), text.as_bytes())
    }

    fn transition(&mut self, to: ProjectState, reason: &str) -> Result<()> {
        log::info!("project {}: {} -> {to} ({reason})", self.file.project_id, self.file.state);
        self.file.history.push(StateChange {
            from: Some(self.file.state),
            to,
            at: Utc::now(),
            reason: reason.into(),
        });
        self.file.state = to;
        self.save_file()
    }

    fn require(&self, expected: ProjectState) -> Result<()> {
        if self.file.state == expected {
            Ok(())
        } else {
            Err(Error::WrongState {
                expected: expected.to_string(),
                actual: self.file.state.to_string(),
            })
        }
    }

    fn check_project(&self, project_id: &str) -> Result<()> {
        if project_id == self.file.project_id {
            Ok(())
        } else {
            Err(Error::NotFound(format!("project {project_id}")))
        }
    }

    fn doc(&self, doc_id: &str) -> Result<&TranscriptDocument> {
        self.corpus
            .iter()
            .find(|d| d.doc_id == doc_id)
            .ok_or_else(|| Error::NotFound(format!("document {doc_id}")))
    }

    fn latest_verdict(&self, detection_id: &str) -> Option<&Verdict> {
        self.verdicts.iter().rev().find(|v| v.detection_id == detection_id)
    }

    fn view(&self, d: &Detection) -> Result<DetectionView> {
        let verdict = self.latest_verdict(&d.detection_id).cloned();
        let mut current = d.clone();
        if let Some(Verdict {
            decision: Decision::Reclassify { category, risk },
            ..
        }) = &verdict
        {
            current.category = category.clone();
            current.risk = Some(*risk);
        }
        let proposed_strategy = match verdict.as_ref().and_then(|v| v.strategy_override) {
            Some(o) => o,
            None => select_strategy(&current, &self.pipeline.config.anonymization.matrix)?,
        };
        Ok(DetectionView {
            detection: DetectionRecord::from(current),
            proposed_strategy,
            verdict,
        })
    }

    pub fn documents(&self) -> Vec<DocumentSummary> {
        self.corpus
            .iter()
            .map(|doc| {
                let ids: Vec<&str> = self
                    .detections
                    .iter()
                    .filter(|d| d.span.doc_id == doc.doc_id)
                    .map(|d| d.detection_id.as_str())
                    .collect();
                let reviewed = ids.iter().filter(|id| self.latest_verdict(id).is_some()).count();
                DocumentSummary {
                    doc_id: doc.doc_id.clone(),
                    case_label: doc.case_label.clone(),
                    turns: doc.turns.len(),
                    detections: ids.len(),
                    reviewed,
                    state: self.file.state,
                }
            })
            .collect()
    }

    /// Everything needed to review one document, with a preview computed
    /// exactly as `finalize` would compute it under the current verdicts.
    pub fn bundle(&self, doc_id: &str) -> Result<ReviewBundle> {
        let doc = self.doc(doc_id)?;
        if self.file.state < ProjectState::Classified {
            return Err(Error::WrongState {
                expected: ProjectState::Classified.to_string(),
                actual: self.file.state.to_string(),
            });
        }
        let mut dets: Vec<&Detection> = self.detections.iter().filter(|d| d.span.doc_id == doc_id).collect();
        dets.sort_by_key(|d| (d.span.turn_index, d.span.start, d.span.end));
        let detections = dets.into_iter().map(|d| self.view(d)).collect::<Result<Vec<_>>>()?;
        let ids: std::collections::BTreeSet<&str> = detections.iter().map(|v| v.detection.detection_id.as_str()).collect();
        let verdicts = self
            .verdicts
            .iter()
            .filter(|v| ids.contains(v.detection_id.as_str()))
            .cloned()
            .collect();
        let preview_doc = self
            .pipeline
            .preview(&self.corpus, &self.detections, &self.verdicts)?
            .into_iter()
            .find(|d| d.doc_id == doc_id)
            .ok_or_else(|| Error::NotFound(format!("document {doc_id}")))?;
        let preview = doc
            .turns
            .iter()
            .zip(&preview_doc.turns)
            .map(|(o, a)| TurnPreview {
                turn: o.index,
                original: o.text.clone(),
                anonymized: a.text.clone(),
            })
            .collect();
        Ok(ReviewBundle {
            doc_id: doc_id.to_string(),
            state: self.file.state,
            turns: doc.turns.clone(),
            detections,
            verdicts,
            preview,
        })
    }

    /// Append a verdict to the log and return the detection's new view.
    pub fn submit_verdict(&mut self, detection_id: &str, req: VerdictRequest) -> Result<DetectionView> {
        if let Some(body_id) = &req.detection_id {
            if body_id != detection_id {
                return Err(Error::MalformedInput {
                    line: 0,
                    message: format!("body names detection {body_id} but the URL names {detection_id}"),
                });
            }
        }
        let det = self
            .detections
            .iter()
            .find(|d| d.detection_id == detection_id)
            .cloned()
            .ok_or_else(|| Error::NotFound(format!("detection {detection_id}")))?;
        self.require(ProjectState::UnderReview)?;
        if let Decision::Reclassify { category, .. } = &req.decision {
            let group = self.pipeline.taxonomy.group_of(&category.subtype);
            if group != Some(category.group) {
                return Err(Error::UnknownSubtype(format!("{}/{}", category.group, category.subtype)));
            }
        }
        if req.reviewer.trim().is_empty() {
            return Err(Error::MalformedInput {
                line: 0,
                message: "reviewer is required".into(),
            });
        }
        let verdict = Verdict {
            detection_id: detection_id.to_string(),
            decision: req.decision,
            strategy_override: req.strategy_override,
            reviewer: req.reviewer,
            timestamp: req.timestamp.unwrap_or_else(Utc::now),
        };
        self.append_verdict(&verdict)?;
        self.verdicts.push(verdict);
        self.view(&det)
    }

    fn append_verdict(&self, v: &Verdict) -> Result<()> {
        let path = self.dir().join(artifacts::VERDICTS);
        let mut line = serde_json::to_string(v)?;
        line.push('\n');
        let mut f = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(|e| Error::io(&path, e))?;
        f.write_all(line.as_bytes()).map_err(|e| Error::io(&path, e))?;
        f.sync_all().map_err(|e| Error::io(&path, e))
    }

    fn response(&self, summary: FinalizeSummary) -> FinalizeResponse {
        FinalizeResponse {
            project_id: self.file.project_id.clone(),
            state: self.file.state,
            report: summary.report_written.then(|| self.dir().join(artifacts::REPORT_JSON)),
            summary,
            anonymized: self.dir().join(artifacts::ANONYMIZED),
            audit: self.dir().join(artifacts::AUDIT),
        }
    }

    /// Anonymize with the recorded verdicts. A second call returns the
    /// existing outputs.
    pub fn finalize(&mut self, project_id: &str, req: FinalizeRequest) -> Result<FinalizeResponse> {
        self.check_project(project_id)?;
        let summary_path = self.dir().join(FINALIZE_FILE);
        if self.file.state == ProjectState::Finalized {
            let summary: FinalizeSummary = io::read_json(&summary_path).map_err(corrupt)?;
            return Ok(self.response(summary));
        }
        self.require(ProjectState::UnderReview)?;
        let summary = self.pipeline.finalize(req.auto_accept)?;
        let mut text = serde_json::to_string_pretty(&summary)?;
        text.push('\n');
        io::write_atomic(&summary_path, text.as_bytes())?;
        self.transition(ProjectState::Finalized, "finalized")?;
        Ok(self.response(summary))
    }

    /// Return a finalized project to review.
    pub fn reopen(&mut self, project_id: &str) -> Result<ProjectState> {
        self.check_project(project_id)?;
        self.require(ProjectState::Finalized)?;
        self.transition(ProjectState::UnderReview, "reopened")?;
        Ok(self.file.state)
    }

    /// The latest evaluation report, if one was written.
    pub fn latest_report(&self) -> Result<serde_json::Value> {
        let path = self.dir().join(artifacts::REPORT_JSON);
        if !path.exists() {
            return Err(Error::NotFound("no evaluation report yet".into()));
        }
        io::read_json(&path)
    }
}
