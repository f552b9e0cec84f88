//! The five creation stages as runnable units over a [`TutorialDocument`]:
//! 1 steps, 2 thumbnails, 3 objects, 4 object boxes, 5 dependencies.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::depgraph::build_dependencies;
use crate::document::{DocumentError, ObjectEntry, StageStatus, StepEntry, Thumbnail, TutorialDocument, STAGE_COUNT};
use crate::extraction::{
    default_stoplist, extract_objects, extract_steps, heuristic_object_extractor, heuristic_step_extractor,
    ExtractionConfig, ExtractionError, GenerationProvider,
};
use crate::linker::{match_objects_to_steps, normalize_term, Association, MatchMode, MatchSource};
use crate::localization::{localize_objects, DetectorProvider, FrameRef, LocalizationError, DEFAULT_MIN_CONFIDENCE};
use crate::shots::{detect_boundaries, select_thumbnails, FrameSample, ShotBoundary, ShotError, DEFAULT_THRESHOLD};
use crate::Interval;

/// Candidate frames per step handed to the detector.
pub const DETECTOR_FRAMES_PER_STEP: usize = 3;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("stage {0} does not exist")]
    UnknownStage(usize),
    #[error("stage {stage} needs the output of stage {requires}")]
    MissingPrerequisiteStage { stage: usize, requires: usize },
    #[error("stage {stage} extraction failed: {source}")]
    Extraction {
        stage: usize,
        #[source]
        source: ExtractionError,
    },
    #[error(transparent)]
    Localization(#[from] LocalizationError),
    #[error(transparent)]
    Shots(#[from] ShotError),
    #[error(transparent)]
    Document(#[from] DocumentError),
}

/// Everything a stage run may call out to.
pub struct StageContext<'a> {
    pub provider: &'a dyn GenerationProvider,
    pub detector: &'a dyn DetectorProvider,
    pub frames: &'a [FrameSample],
    pub extraction: ExtractionConfig,
    pub shot_threshold: f64,
    pub min_confidence: f64,
    /// Replace a failed model call with the heuristic extractor instead of failing.
    pub allow_fallback: bool,
}

impl<'a> StageContext<'a> {
    pub fn new(
        provider: &'a dyn GenerationProvider,
        detector: &'a dyn DetectorProvider,
        frames: &'a [FrameSample],
    ) -> Self {
        Self {
            provider,
            detector,
            frames,
            extraction: ExtractionConfig::default(),
            shot_threshold: DEFAULT_THRESHOLD,
            min_confidence: DEFAULT_MIN_CONFIDENCE,
            allow_fallback: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageReport {
    pub stage: usize,
    pub fallback: bool,
    /// The model failure that triggered the fallback, if any.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provider_error: Option<String>,
    pub warnings: Vec<String>,
}

impl StageReport {
    fn new(stage: usize) -> Self {
        Self {
            stage,
            fallback: false,
            provider_error: None,
            warnings: Vec::new(),
        }
    }
}

/// Stage 1 output must exist before the later stages can run. Gating is
/// otherwise advisory: stages run on AI output that nobody accepted yet.
pub fn check_prerequisites(doc: &TutorialDocument, stage: usize) -> Result<(), PipelineError> {
    if !(1..=STAGE_COUNT).contains(&stage) {
        return Err(PipelineError::UnknownStage(stage));
    }
    if stage > 1 && doc.stage(1).is_none_or(|r| r.status == StageStatus::Pending) {
        return Err(PipelineError::MissingPrerequisiteStage { stage, requires: 1 });
    }
    Ok(())
}

/// Runs one stage and stores its output. The document changes only on
/// success; its revision is bumped and the stage marked `ai_done`, while the
/// status of every other stage is left alone.
pub fn run_stage(doc: &mut TutorialDocument, stage: usize, ctx: &StageContext) -> Result<StageReport, PipelineError> {
    check_prerequisites(doc, stage)?;
    let mut next = doc.clone();
    let mut report = StageReport::new(stage);
    match stage {
        1 => run_steps(&mut next, ctx, &mut report)?,
        2 => run_thumbnails(&mut next, ctx, &mut report)?,
        3 => run_objects(&mut next, ctx, &mut report)?,
        4 => run_localization(&mut next, ctx, &mut report)?,
        _ => run_dependencies(&mut next),
    }
    next.validate()?;
    let record = next.stage_mut(stage).expect("stage checked above");
    record.status = StageStatus::AiDone;
    record.fallback = report.fallback;
    next.revision += 1;
    *doc = next;
    Ok(report)
}

/// Runs stages 1 through 5 in order.
pub fn run_all(doc: &mut TutorialDocument, ctx: &StageContext) -> Result<Vec<StageReport>, PipelineError> {
    (1..=STAGE_COUNT).map(|s| run_stage(doc, s, ctx)).collect()
}

fn fallback_or_fail(stage: usize, ctx: &StageContext, report: &mut StageReport, err: ExtractionError) -> Result<(), PipelineError> {
    if !ctx.allow_fallback {
        return Err(PipelineError::Extraction { stage, source: err });
    }
    report.fallback = true;
    report.warnings.push(format!("model extraction failed ({err}); used the heuristic extractor"));
    report.provider_error = Some(err.to_string());
    Ok(())
}

fn run_steps(doc: &mut TutorialDocument, ctx: &StageContext, report: &mut StageReport) -> Result<(), PipelineError> {
    let drafts = match extract_steps(ctx.provider, &doc.transcript, &ctx.extraction) {
        Ok(d) if !d.is_empty() => d,
        Ok(_) => {
            fallback_or_fail(1, ctx, report, ExtractionError::NoStepsParsed)?;
            heuristic_step_extractor(&doc.transcript, None)
        }
        Err(e) => {
            fallback_or_fail(1, ctx, report, e)?;
            heuristic_step_extractor(&doc.transcript, None)
        }
    };
    // new step boundaries invalidate everything keyed by step index
    doc.steps = drafts.into_iter().map(StepEntry::new).collect();
    doc.edges.edges.clear();
    doc.edges.step_count = doc.steps.len();
    Ok(())
}

fn boundaries(ctx: &StageContext) -> Result<Vec<ShotBoundary>, ShotError> {
    detect_boundaries(ctx.frames, ctx.shot_threshold)
}

fn step_frames<'f>(
    step: Interval,
    ctx: &StageContext<'f>,
    cuts: &[ShotBoundary],
    k: usize,
) -> Result<Vec<&'f FrameSample>, ShotError> {
    match select_thumbnails(step, ctx.frames, cuts, k) {
        Err(ShotError::NoFramesInInterval { .. }) => Ok(Vec::new()),
        other => other,
    }
}

fn run_thumbnails(doc: &mut TutorialDocument, ctx: &StageContext, report: &mut StageReport) -> Result<(), PipelineError> {
    let cuts = boundaries(ctx)?;
    for (i, step) in doc.steps.iter_mut().enumerate() {
        let picked = step_frames(step.draft.interval(), ctx, &cuts, 1)?;
        step.thumbnail = picked.first().map(|f| Thumbnail {
            image_ref: f.image_ref.clone(),
            time_s: f.time_s,
        });
        if step.thumbnail.is_none() {
            report.warnings.push(format!("step {i} has no frames"));
        }
    }
    Ok(())
}

fn run_objects(doc: &mut TutorialDocument, ctx: &StageContext, report: &mut StageReport) -> Result<(), PipelineError> {
    let drafts = match extract_objects(ctx.provider, &doc.transcript, &ctx.extraction) {
        Ok(d) => d,
        Err(e) => {
            fallback_or_fail(3, ctx, report, e)?;
            heuristic_object_extractor(&doc.transcript, &default_stoplist())
        }
    };
    let mut names: Vec<String> = Vec::new();
    for d in drafts {
        if let Ok(n) = normalize_term(&d.name) {
            if !names.contains(&n) {
                names.push(n);
            }
        }
    }
    let steps: Vec<_> = doc.steps.iter().map(|s| s.draft.clone()).collect();
    let associations = match_objects_to_steps(&names, &steps, &doc.transcript, MatchMode::Both);

    let previous = std::mem::take(&mut doc.objects);
    doc.objects = names
        .iter()
        .map(|n| {
            previous
                .iter()
                .find(|o| o.name == *n)
                .cloned()
                .unwrap_or_else(|| ObjectEntry::new(n.clone()))
        })
        .collect();
    for s in &mut doc.steps {
        s.objects.clear();
    }
    for a in &associations {
        doc.steps[a.step_index].objects.push(a.object_name.clone());
    }
    for gone in previous.iter().filter(|o| !names.contains(&o.name)) {
        doc.remove_edge_label(&gone.name);
    }
    Ok(())
}

fn run_localization(doc: &mut TutorialDocument, ctx: &StageContext, report: &mut StageReport) -> Result<(), PipelineError> {
    let cuts = boundaries(ctx)?;
    let mut thumbs: Vec<FrameRef> = Vec::new();
    for step in &doc.steps {
        for f in step_frames(step.draft.interval(), ctx, &cuts, DETECTOR_FRAMES_PER_STEP)? {
            thumbs.push(f.into());
        }
    }
    let names: Vec<String> = doc.objects.iter().map(|o| o.name.clone()).collect();
    let found = match localize_objects(ctx.detector, &names, &doc.transcript, ctx.frames, &thumbs, ctx.min_confidence) {
        Ok(found) => found,
        // without a detector every object keeps its current image, if any
        Err(LocalizationError::Provider(e)) if ctx.allow_fallback => {
            report.fallback = true;
            report.warnings.push(format!("detector failed ({e}); objects left without boxes"));
            report.provider_error = Some(e.to_string());
            return Ok(());
        }
        Err(e) => return Err(e.into()),
    };
    for (object, loc) in doc.objects.iter_mut().zip(found) {
        object.appearances = loc.appearances;
        // a box drawn by hand outlives detector re-runs
        if object.manual_image.is_none() {
            object.best = loc.best;
        }
    }
    Ok(())
}

fn run_dependencies(doc: &mut TutorialDocument) {
    let associations: Vec<Association> = doc
        .steps
        .iter()
        .enumerate()
        .flat_map(|(i, s)| {
            s.objects.iter().map(move |n| Association {
                object_name: n.clone(),
                step_index: i,
                source: MatchSource::Both,
            })
        })
        .collect();
    let manual: Vec<_> = doc.edges.edges.iter().filter(|e| e.manual).cloned().collect();
    let mut graph = build_dependencies(doc.steps.len(), &associations);
    for e in manual {
        graph.add_edge(e).expect("stored manual edges point forward");
    }
    doc.edges = graph;
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::document::Edit;
    use crate::extraction::{FailingProvider, ProviderError, StubProvider};
    use crate::localization::{BoundingBox, DetectorFixture, StubDetector};
    use crate::shots::histogram_from_pixels;
    use crate::transcript::Transcript;

    fn transcript() -> Transcript {
        Transcript::new(
            "vid",
            120.0,
            [
                (0.0, 8.0, "Cut the board to length".to_string()),
                (8.0, 20.0, "Sand the board edges".to_string()),
                (45.0, 55.0, "Apply glue to the board".to_string()),
                (60.0, 70.0, "Clamp it while the glue dries".to_string()),
                (100.0, 110.0, "Paint the finished board".to_string()),
            ],
        )
        .unwrap()
    }

    fn frames() -> Vec<FrameSample> {
        (0..120)
            .step_by(2)
            .map(|t| {
                let shade = if t < 40 { 0 } else if t < 90 { 128 } else { 255 };
                FrameSample {
                    time_s: t as f64,
                    feature: histogram_from_pixels(std::iter::repeat_n([shade, 0, 0], 4)).unwrap(),
                    image_ref: format!("{t}.000.jpg"),
                }
            })
            .collect()
    }

    fn detector() -> StubDetector {
        StubDetector::new(vec![DetectorFixture {
            name: "board".into(),
            frame: "46.000.jpg".into(),
            bbox: BoundingBox::new(0.1, 0.1, 0.5, 0.5).unwrap(),
            score: 0.9,
        }])
    }

    #[test]
    fn full_run_with_stub() {
        let stub = StubProvider::synthetic();
        let det = detector();
        let frames = frames();
        let ctx = StageContext::new(&stub, &det, &frames);
        let mut doc = TutorialDocument::new(transcript(), None);
        let reports = run_all(&mut doc, &ctx).unwrap();
        assert!(reports.iter().all(|r| !r.fallback));
        assert!(doc.stage_status.iter().all(|r| r.status == StageStatus::AiDone));
        assert_eq!(doc.revision, 5);
        assert!(!doc.steps.is_empty());
        assert!(doc.steps.iter().all(|s| s.thumbnail.is_some()));
        assert!(doc.object("board").is_some());
        assert_eq!(doc.object("board").unwrap().best.as_ref().unwrap().frame_time_s, 46.0);
        assert!(!doc.edges.edges.is_empty());
        doc.validate().unwrap();
    }

    #[test]
    fn later_stages_need_steps() {
        let stub = StubProvider::synthetic();
        let det = detector();
        let ctx = StageContext::new(&stub, &det, &[]);
        let mut doc = TutorialDocument::new(transcript(), None);
        for stage in 2..=5 {
            assert!(matches!(
                run_stage(&mut doc, stage, &ctx),
                Err(PipelineError::MissingPrerequisiteStage { requires: 1, .. })
            ));
        }
        assert!(matches!(run_stage(&mut doc, 6, &ctx), Err(PipelineError::UnknownStage(6))));
        assert_eq!(doc.revision, 0);
    }

    struct DownDetector;

    impl DetectorProvider for DownDetector {
        fn locate(&self, _: &[String], _: &[FrameRef]) -> Result<Vec<crate::localization::Detection>, LocalizationError> {
            Err(ProviderError::Transport("connection refused".into()).into())
        }
    }

    #[test]
    fn detector_failure_leaves_objects_unboxed() {
        let stub = StubProvider::synthetic();
        let frames = frames();
        let mut ctx = StageContext::new(&stub, &DownDetector, &frames);
        let mut doc = TutorialDocument::new(transcript(), None);
        let reports = run_all(&mut doc, &ctx).unwrap();
        assert!(reports[3].fallback);
        assert!(doc.objects.iter().all(|o| o.best.is_none()));
        assert_eq!(doc.stage(4).unwrap().status, StageStatus::AiDone);

        ctx.allow_fallback = false;
        assert!(matches!(run_stage(&mut doc, 4, &ctx), Err(PipelineError::Localization(_))));
    }

    #[test]
    fn provider_failure_falls_back() {
        let failing = FailingProvider(ProviderError::Timeout);
        let det = detector();
        let mut ctx = StageContext::new(&failing, &det, &[]);
        let mut doc = TutorialDocument::new(transcript(), None);
        let report = run_stage(&mut doc, 1, &ctx).unwrap();
        assert!(report.fallback);
        assert!(doc.stage(1).unwrap().fallback);
        assert_eq!(doc.steps.first().unwrap().draft.start_s, 0.0);
        assert_eq!(doc.steps.last().unwrap().draft.end_s, 120.0);

        ctx.allow_fallback = false;
        let before = doc.clone();
        assert!(matches!(run_stage(&mut doc, 3, &ctx), Err(PipelineError::Extraction { stage: 3, .. })));
        assert_eq!(doc, before);
    }

    #[test]
    fn rerun_keeps_other_acceptances_and_manual_edges() {
        let stub = StubProvider::synthetic();
        let det = detector();
        let frames = frames();
        let ctx = StageContext::new(&stub, &det, &frames);
        let mut doc = TutorialDocument::new(transcript(), None);
        run_all(&mut doc, &ctx).unwrap();
        let last = doc.steps.len() - 1;
        doc.apply_edit(doc.revision, &Edit::AddEdge { from_step: 0, to_step: last, objects: vec![] })
            .unwrap();
        doc.apply_edit(doc.revision, &Edit::AcceptStage { stage: 2 }).unwrap();
        run_stage(&mut doc, 5, &ctx).unwrap();
        assert_eq!(doc.stage(2).unwrap().status, StageStatus::UserAccepted);
        assert!(doc.edges.edge(0, last).unwrap().manual);
        let again = doc.clone();
        run_stage(&mut doc, 5, &ctx).unwrap();
        assert_eq!(doc.edges, again.edges);
    }
}
