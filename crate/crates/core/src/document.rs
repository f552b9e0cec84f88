//! The project file: one JSON document holding the transcript and every
//! stage's output, mutated through validated, revision-checked edits.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::depgraph::{validate_acyclic, DependencyEdge, DependencyGraph, GraphError};
use crate::extraction::StepDraft;
use crate::linker::normalize_term;
use crate::localization::{BoundingBox, Detection};
use crate::transcript::Transcript;

pub const SCHEMA_VERSION: u32 = 1;
pub const STAGE_COUNT: usize = 5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DocumentError {
    #[error("document is at revision {actual}, edit expected {expected}")]
    StaleRevision { expected: u64, actual: u64 },
    #[error("step {step} would overlap a neighbouring step")]
    OverlapRejected { step: usize },
    #[error("unknown {0}")]
    UnknownTarget(String),
    #[error(transparent)]
    CycleDetected(#[from] GraphError),
    #[error("invalid edit: {0}")]
    InvalidEdit(String),
    #[error("schema version {found:?} is not supported (expected {expected})")]
    SchemaVersionMismatch { found: Option<u64>, expected: u32 },
    #[error("corrupt document: {0}")]
    CorruptDocument(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StageStatus {
    #[default]
    Pending,
    AiDone,
    UserAccepted,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct StageRecord {
    pub status: StageStatus,
    /// The stored output came from a heuristic after the model provider failed.
    #[serde(default)]
    pub fallback: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Thumbnail {
    pub image_ref: String,
    pub time_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepEntry {
    pub draft: StepDraft,
    pub thumbnail: Option<Thumbnail>,
    pub objects: Vec<String>,
}

impl StepEntry {
    pub fn new(draft: StepDraft) -> Self {
        Self {
            draft,
            thumbnail: None,
            objects: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectEntry {
    pub name: String,
    pub best: Option<Detection>,
    pub appearances: Vec<f64>,
    pub manual_image: Option<String>,
}

impl ObjectEntry {
    pub fn new(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            best: None,
            appearances: Vec::new(),
            manual_image: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TutorialDocument {
    pub schema_version: u32,
    pub video_id: String,
    pub duration_s: f64,
    pub transcript: Transcript,
    /// Directory holding the sampled frames; image references are relative to it.
    pub frames_dir: Option<String>,
    pub steps: Vec<StepEntry>,
    pub objects: Vec<ObjectEntry>,
    pub edges: DependencyGraph,
    /// Stages 1 to 5, in order.
    pub stage_status: Vec<StageRecord>,
    pub revision: u64,
}

/// User edits, tagged by `op` in JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum Edit {
    SetStepText {
        step: usize,
        text: String,
    },
    SetStepInterval {
        step: usize,
        start_s: f64,
        end_s: f64,
    },
    AddStep {
        text: String,
        start_s: f64,
        end_s: f64,
    },
    DeleteStep {
        step: usize,
    },
    SetThumbnail {
        step: usize,
        image_ref: String,
        time_s: f64,
    },
    AddObject {
        name: String,
        #[serde(default)]
        steps: Vec<usize>,
    },
    RenameObject {
        from: String,
        to: String,
    },
    DeleteObject {
        name: String,
    },
    SetObjectStepLinks {
        name: String,
        steps: Vec<usize>,
    },
    SetObjectBox {
        name: String,
        image_ref: String,
        time_s: f64,
        #[serde(rename = "box")]
        bbox: BoundingBox,
    },
    AddEdge {
        from_step: usize,
        to_step: usize,
        #[serde(default)]
        objects: Vec<String>,
    },
    DeleteEdge {
        from_step: usize,
        to_step: usize,
    },
    AcceptStage {
        stage: usize,
    },
}

impl Edit {
    /// Workflow stage (1 to 5) the edit belongs to.
    pub fn stage(&self) -> usize {
        match self {
            Edit::SetStepText { .. } | Edit::SetStepInterval { .. } | Edit::AddStep { .. } | Edit::DeleteStep { .. } => 1,
            Edit::SetThumbnail { .. } => 2,
            Edit::AddObject { .. }
            | Edit::RenameObject { .. }
            | Edit::DeleteObject { .. }
            | Edit::SetObjectStepLinks { .. } => 3,
            Edit::SetObjectBox { .. } => 4,
            Edit::AddEdge { .. } | Edit::DeleteEdge { .. } => 5,
            Edit::AcceptStage { stage } => *stage,
        }
    }
}

fn unknown_step(step: usize) -> DocumentError {
    DocumentError::UnknownTarget(format!("step {step}"))
}

fn unknown_object(name: &str) -> DocumentError {
    DocumentError::UnknownTarget(format!("object {name:?}"))
}

fn canonical(name: &str) -> Result<String, DocumentError> {
    normalize_term(name).map_err(|e| DocumentError::InvalidEdit(e.to_string()))
}

fn corrupt(msg: impl Into<String>) -> DocumentError {
    DocumentError::CorruptDocument(msg.into())
}

impl TutorialDocument {
    /// Fresh project: no stage has run yet.
    pub fn new(transcript: Transcript, frames_dir: Option<String>) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            video_id: transcript.video_id.clone(),
            duration_s: transcript.duration_s,
            transcript,
            frames_dir,
            steps: Vec::new(),
            objects: Vec::new(),
            edges: DependencyGraph::default(),
            stage_status: vec![StageRecord::default(); STAGE_COUNT],
            revision: 0,
        }
    }

    pub fn stage(&self, stage: usize) -> Option<&StageRecord> {
        stage.checked_sub(1).and_then(|i| self.stage_status.get(i))
    }

    pub fn stage_mut(&mut self, stage: usize) -> Option<&mut StageRecord> {
        stage.checked_sub(1).and_then(|i| self.stage_status.get_mut(i))
    }

    pub fn object(&self, name: &str) -> Option<&ObjectEntry> {
        self.objects.iter().find(|o| o.name == name)
    }

    fn object_index(&self, name: &str) -> Result<usize, DocumentError> {
        let key = canonical(name)?;
        self.objects
            .iter()
            .position(|o| o.name == key)
            .ok_or_else(|| unknown_object(name))
    }

    fn check_step(&self, step: usize) -> Result<(), DocumentError> {
        if step < self.steps.len() {
            Ok(())
        } else {
            Err(unknown_step(step))
        }
    }

    /// Checks every document invariant.
    pub fn validate(&self) -> Result<(), DocumentError> {
        if self.stage_status.len() != STAGE_COUNT {
            return Err(corrupt(format!("expected {STAGE_COUNT} stage records")));
        }
        if !(self.duration_s.is_finite() && self.duration_s >= 0.0) {
            return Err(corrupt("duration must be finite and non-negative"));
        }
        for (i, s) in self.steps.iter().enumerate() {
            let d = &s.draft;
            if !(d.start_s >= 0.0 && d.start_s < d.end_s && d.end_s <= self.duration_s) {
                return Err(corrupt(format!("step {i} has an invalid interval")));
            }
            if i > 0 && self.steps[i - 1].draft.end_s > d.start_s {
                return Err(DocumentError::OverlapRejected { step: i });
            }
        }
        let mut names = BTreeSet::new();
        for o in &self.objects {
            if !names.insert(o.name.as_str()) {
                return Err(corrupt(format!("object {:?} is listed twice", o.name)));
            }
            if let Some(best) = &o.best {
                best.bbox.validate().map_err(|e| corrupt(e.to_string()))?;
            }
        }
        for (i, s) in self.steps.iter().enumerate() {
            let mut seen = BTreeSet::new();
            for name in &s.objects {
                if !names.contains(name.as_str()) || !seen.insert(name) {
                    return Err(corrupt(format!("step {i} links unknown or repeated object {name:?}")));
                }
            }
        }
        if self.edges.step_count != self.steps.len() {
            return Err(corrupt("edge graph step count differs from the step list"));
        }
        validate_acyclic(&self.edges)?;
        let mut pairs = BTreeSet::new();
        for e in &self.edges.edges {
            if e.to_step >= self.steps.len() {
                return Err(corrupt(format!("edge {} -> {} points past the last step", e.from_step, e.to_step)));
            }
            if !pairs.insert((e.from_step, e.to_step)) {
                return Err(corrupt(format!("edge {} -> {} is listed twice", e.from_step, e.to_step)));
            }
            if let Some(n) = e.shared_objects.iter().find(|n| !names.contains(n.as_str())) {
                return Err(corrupt(format!("edge label {n:?} is not a known object")));
            }
        }
        Ok(())
    }

    /// Applies `edit` if `expected_revision` is current. On any error the
    /// document is left untouched.
    pub fn apply_edit(&mut self, expected_revision: u64, edit: &Edit) -> Result<(), DocumentError> {
        if expected_revision != self.revision {
            return Err(DocumentError::StaleRevision {
                expected: expected_revision,
                actual: self.revision,
            });
        }
        let mut next = self.clone();
        next.mutate(edit)?;
        next.validate()?;
        next.revision += 1;
        *self = next;
        Ok(())
    }

    fn check_interval(&self, start_s: f64, end_s: f64) -> Result<(), DocumentError> {
        if start_s >= 0.0 && start_s < end_s && end_s <= self.duration_s {
            Ok(())
        } else {
            Err(DocumentError::InvalidEdit(format!(
                "interval [{start_s}, {end_s}] must be non-empty and inside [0, {}]",
                self.duration_s
            )))
        }
    }

    fn mutate(&mut self, edit: &Edit) -> Result<(), DocumentError> {
        match edit {
            Edit::SetStepText { step, text } => {
                self.check_step(*step)?;
                let text = text.trim();
                if text.is_empty() {
                    return Err(DocumentError::InvalidEdit("step text is empty".into()));
                }
                self.steps[*step].draft.title = text.to_string();
            }
            Edit::SetStepInterval { step, start_s, end_s } => {
                self.check_step(*step)?;
                self.check_interval(*start_s, *end_s)?;
                let before = step.checked_sub(1).map(|i| self.steps[i].draft.end_s);
                let after = self.steps.get(step + 1).map(|s| s.draft.start_s);
                if before.is_some_and(|b| b > *start_s) || after.is_some_and(|a| a < *end_s) {
                    return Err(DocumentError::OverlapRejected { step: *step });
                }
                let d = &mut self.steps[*step].draft;
                d.start_s = *start_s;
                d.end_s = *end_s;
            }
            Edit::AddStep { text, start_s, end_s } => {
                self.check_interval(*start_s, *end_s)?;
                let at = self.steps.partition_point(|s| s.draft.start_s < *start_s);
                let before = at.checked_sub(1).map(|i| self.steps[i].draft.end_s);
                let after = self.steps.get(at).map(|s| s.draft.start_s);
                if before.is_some_and(|b| b > *start_s) || after.is_some_and(|a| a < *end_s) {
                    return Err(DocumentError::OverlapRejected { step: at });
                }
                let title = match text.trim() {
                    "" => format!("Step {}", at + 1),
                    t => t.to_string(),
                };
                self.steps.insert(at, StepEntry::new(StepDraft::new(title, *start_s, *end_s)));
                self.edges.insert_step(at);
            }
            Edit::DeleteStep { step } => {
                self.check_step(*step)?;
                self.steps.remove(*step);
                self.edges.remove_step(*step);
            }
            Edit::SetThumbnail { step, image_ref, time_s } => {
                self.check_step(*step)?;
                if image_ref.trim().is_empty() {
                    return Err(DocumentError::InvalidEdit("thumbnail reference is empty".into()));
                }
                self.steps[*step].thumbnail = Some(Thumbnail {
                    image_ref: image_ref.clone(),
                    time_s: *time_s,
                });
            }
            Edit::AddObject { name, steps } => {
                let name = canonical(name)?;
                if self.object(&name).is_some() {
                    return Err(DocumentError::InvalidEdit(format!("object {name:?} already exists")));
                }
                for s in steps {
                    self.check_step(*s)?;
                }
                self.objects.push(ObjectEntry::new(name.clone()));
                self.link_object(&name, steps);
            }
            Edit::RenameObject { from, to } => {
                let i = self.object_index(from)?;
                let old = self.objects[i].name.clone();
                let new = canonical(to)?;
                if new == old {
                    return Ok(());
                }
                if self.object(&new).is_some() {
                    return Err(DocumentError::InvalidEdit(format!("object {new:?} already exists")));
                }
                self.objects[i].name = new.clone();
                if let Some(best) = &mut self.objects[i].best {
                    best.object_name = new.clone();
                }
                for s in &mut self.steps {
                    for n in s.objects.iter_mut().filter(|n| **n == old) {
                        *n = new.clone();
                    }
                }
                for e in &mut self.edges.edges {
                    if e.shared_objects.remove(&old) {
                        e.shared_objects.insert(new.clone());
                    }
                }
            }
            Edit::DeleteObject { name } => {
                let i = self.object_index(name)?;
                let old = self.objects.remove(i).name;
                for s in &mut self.steps {
                    s.objects.retain(|n| *n != old);
                }
                self.remove_edge_label(&old);
            }
            Edit::SetObjectStepLinks { name, steps } => {
                let i = self.object_index(name)?;
                for s in steps {
                    self.check_step(*s)?;
                }
                let name = self.objects[i].name.clone();
                for s in &mut self.steps {
                    s.objects.retain(|n| *n != name);
                }
                self.link_object(&name, steps);
            }
            Edit::SetObjectBox {
                name,
                image_ref,
                time_s,
                bbox,
            } => {
                let i = self.object_index(name)?;
                bbox.validate()
                    .map_err(|e| DocumentError::InvalidEdit(e.to_string()))?;
                let o = &mut self.objects[i];
                o.best = Some(Detection {
                    object_name: o.name.clone(),
                    frame_time_s: *time_s,
                    image_ref: image_ref.clone(),
                    bbox: *bbox,
                    confidence: 1.0,
                });
                o.manual_image = Some(image_ref.clone());
            }
            Edit::AddEdge {
                from_step,
                to_step,
                objects,
            } => {
                self.check_step(*from_step)?;
                self.check_step(*to_step)?;
                let mut shared = BTreeSet::new();
                for n in objects {
                    let i = self.object_index(n)?;
                    shared.insert(self.objects[i].name.clone());
                }
                self.edges.add_edge(DependencyEdge {
                    from_step: *from_step,
                    to_step: *to_step,
                    shared_objects: shared,
                    manual: true,
                })?;
            }
            Edit::DeleteEdge { from_step, to_step } => {
                if !self.edges.remove_edge(*from_step, *to_step) {
                    return Err(DocumentError::UnknownTarget(format!("edge {from_step} -> {to_step}")));
                }
            }
            Edit::AcceptStage { stage } => {
                let record = self
                    .stage_mut(*stage)
                    .ok_or_else(|| DocumentError::UnknownTarget(format!("stage {stage}")))?;
                record.status = StageStatus::UserAccepted;
            }
        }
        Ok(())
    }

    fn link_object(&mut self, name: &str, steps: &[usize]) {
        for &s in steps {
            let list = &mut self.steps[s].objects;
            if !list.iter().any(|n| n == name) {
                list.push(name.to_string());
            }
        }
    }

    /// Drops `name` from edge labels; derived edges left without a label go too.
    pub fn remove_edge_label(&mut self, name: &str) {
        for e in &mut self.edges.edges {
            e.shared_objects.remove(name);
        }
        self.edges.edges.retain(|e| e.manual || !e.shared_objects.is_empty());
    }

    /// Pretty-printed JSON with a trailing newline. Field order is fixed, so
    /// equal documents serialize to identical bytes.
    pub fn save(&self) -> Vec<u8> {
        let mut bytes = serde_json::to_vec_pretty(self).expect("document serializes");
        bytes.push(b'\n');
        bytes
    }

    pub fn load(bytes: &[u8]) -> Result<Self, DocumentError> {
        let value: serde_json::Value = serde_json::from_slice(bytes).map_err(|e| corrupt(e.to_string()))?;
        let found = value.get("schema_version").and_then(|v| v.as_u64());
        if found != Some(u64::from(SCHEMA_VERSION)) {
            return Err(DocumentError::SchemaVersionMismatch {
                found,
                expected: SCHEMA_VERSION,
            });
        }
        let doc: Self = serde_json::from_value(value).map_err(|e| corrupt(e.to_string()))?;
        doc.validate()?;
        Ok(doc)
    }

    pub fn preview(&self) -> Preview {
        Preview {
            video_id: self.video_id.clone(),
            revision: self.revision,
            duration_s: self.duration_s,
            objects: self
                .objects
                .iter()
                .map(|o| PreviewObject {
                    name: o.name.clone(),
                    image_ref: o
                        .manual_image
                        .clone()
                        .or_else(|| o.best.as_ref().map(|b| b.image_ref.clone())),
                    bbox: o.best.as_ref().map(|b| b.bbox),
                    appearances: o.appearances.clone(),
                })
                .collect(),
            steps: self
                .steps
                .iter()
                .enumerate()
                .map(|(index, s)| PreviewStep {
                    index,
                    text: s.draft.title.clone(),
                    start_s: s.draft.start_s,
                    end_s: s.draft.end_s,
                    thumbnail: s.thumbnail.as_ref().map(|t| t.image_ref.clone()),
                    objects: s.objects.clone(),
                })
                .collect(),
            arrows: self
                .edges
                .edges
                .iter()
                .map(|e| PreviewArrow {
                    from_step: e.from_step,
                    to_step: e.to_step,
                    labels: e.shared_objects.iter().cloned().collect(),
                })
                .collect(),
        }
    }
}

/// Read-only projection the tutorial view renders: object list, step cards
/// and labelled dependency arrows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Preview {
    pub video_id: String,
    pub revision: u64,
    pub duration_s: f64,
    pub objects: Vec<PreviewObject>,
    pub steps: Vec<PreviewStep>,
    pub arrows: Vec<PreviewArrow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreviewObject {
    pub name: String,
    pub image_ref: Option<String>,
    #[serde(rename = "box")]
    pub bbox: Option<BoundingBox>,
    pub appearances: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreviewStep {
    pub index: usize,
    pub text: String,
    pub start_s: f64,
    pub end_s: f64,
    pub thumbnail: Option<String>,
    pub objects: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreviewArrow {
    pub from_step: usize,
    pub to_step: usize,
    pub labels: Vec<String>,
}
