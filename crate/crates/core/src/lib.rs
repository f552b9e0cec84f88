//! Engine for turning an instructional video's transcript and sampled frames
//! into an editable mixed-media tutorial: steps, objects and a dependency DAG
//! between steps, plus the metrics used to score extraction against
//! hand-annotated ground truth.

pub mod depgraph;
pub mod document;
pub mod extraction;
pub mod linker;
pub mod localization;
pub mod metrics;
pub mod pipeline;
pub mod shots;
pub mod transcript;

pub use depgraph::{DependencyEdge, DependencyGraph};
pub use document::{Edit, StageStatus, TutorialDocument};
pub use extraction::{ObjectDraft, StepDraft};
pub use transcript::{TimedSentence, Transcript};

/// A closed time interval in seconds.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Interval {
    pub start_s: f64,
    pub end_s: f64,
}

impl Interval {
    pub const fn new(start_s: f64, end_s: f64) -> Self {
        Self { start_s, end_s }
    }

    pub fn len(&self) -> f64 {
        (self.end_s - self.start_s).max(0.0)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0.0
    }
}
