mod common;

use std::path::{Path, PathBuf};

use common::*;
use serde_json::json;
use stepwise_core::document::{ObjectEntry, StepEntry, TutorialDocument};
use stepwise_core::extraction::StepDraft;
use stepwise_core::metrics::{EvalRow, GroundTruth, GroundTruthStep};
use stepwise_core::transcript::Transcript;

struct Workspace {
    dir: tempfile::TempDir,
}

impl Workspace {
    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("pancakes.vtt"), TRANSCRIPT).unwrap();
        std::fs::create_dir(dir.path().join("frames")).unwrap();
        write_frames(&dir.path().join("frames"), DURATION_S, &[14.0, 45.0, 80.0, 110.0, 140.0]);
        Self { dir }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn extract(&self, out: &str, extra: &[&str]) -> std::process::Output {
        let mut cmd = stepwise();
        cmd.arg("extract")
            .arg("--transcript")
            .arg(self.path("pancakes.vtt"))
            .arg("--frames")
            .arg(self.path("frames"))
            .arg("--out")
            .arg(self.path(out))
            .args(["--duration", "150"])
            .args(extra);
        run(&mut cmd)
    }
}

fn load(path: &Path) -> TutorialDocument {
    TutorialDocument::load(&std::fs::read(path).unwrap()).unwrap()
}

#[test]
fn extract_writes_complete_project() {
    let ws = Workspace::new();
    let out = ws.extract("project.json", &["--provider", "stub", "--seed", "7"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let doc = load(&ws.path("project.json"));
    assert_eq!(doc.video_id, "pancakes");
    assert!(doc.stage_status.iter().all(|s| s.status == stepwise_core::StageStatus::AiDone));
    assert!(!doc.steps.is_empty());
    assert!(doc.steps.iter().all(|s| s.thumbnail.is_some()));
    assert!(doc.object("batter").is_some(), "{:?}", doc.objects);
    assert_eq!(doc.steps.last().unwrap().draft.end_s, DURATION_S);
}

#[test]
fn extract_is_byte_identical_across_runs() {
    let ws = Workspace::new();
    for name in ["a.json", "b.json"] {
        let out = ws.extract(name, &["--provider", "stub", "--seed", "42"]);
        assert!(out.status.success(), "{}", stderr(&out));
    }
    assert_eq!(std::fs::read(ws.path("a.json")).unwrap(), std::fs::read(ws.path("b.json")).unwrap());
}

#[test]
fn extract_leaves_inputs_untouched() {
    let ws = Workspace::new();
    let before = std::fs::read(ws.path("pancakes.vtt")).unwrap();
    let frames_before: Vec<_> = std::fs::read_dir(ws.path("frames")).unwrap().count().to_string().into_bytes();
    assert!(ws.extract("p.json", &[]).status.success());
    assert_eq!(std::fs::read(ws.path("pancakes.vtt")).unwrap(), before);
    let frames_after: Vec<_> = std::fs::read_dir(ws.path("frames")).unwrap().count().to_string().into_bytes();
    assert_eq!(frames_before, frames_after);

    let out = ws.extract("pancakes.vtt", &[]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(std::fs::read(ws.path("pancakes.vtt")).unwrap(), before);
}

#[test]
fn missing_transcript_exits_1() {
    let ws = Workspace::new();
    let out = run(stepwise()
        .arg("extract")
        .arg("--transcript")
        .arg(ws.path("nope.vtt"))
        .arg("--frames")
        .arg(ws.path("frames"))
        .arg("--out")
        .arg(ws.path("x.json")));
    assert_eq!(out.status.code(), Some(1));
    assert!(!ws.path("x.json").exists());
}

#[test]
fn unparsable_transcript_exits_1() {
    let ws = Workspace::new();
    std::fs::write(ws.path("pancakes.vtt"), "this is not a transcript").unwrap();
    assert_eq!(ws.extract("x.json", &[]).status.code(), Some(1));
}

#[test]
fn bad_flags_exit_1() {
    let out = run(stepwise().args(["extract", "--bogus"]));
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(run(stepwise().arg("--help")).status.code(), Some(0));
}

#[test]
fn unreachable_remote_falls_back_with_warning() {
    let ws = Workspace::new();
    let mut cmd = stepwise();
    cmd.env("STEPWISE_PROVIDER_URL", "http://127.0.0.1:9")
        .env("STEPWISE_API_KEY", "test-key");
    let out = run(cmd
        .arg("extract")
        .arg("--transcript")
        .arg(ws.path("pancakes.vtt"))
        .arg("--frames")
        .arg(ws.path("frames"))
        .arg("--out")
        .arg(ws.path("remote.json"))
        .args(["--provider", "remote"]));
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(stderr(&out).contains("warning"), "{}", stderr(&out));
    let doc = load(&ws.path("remote.json"));
    assert!(doc.stage(1).unwrap().fallback);
    assert!(!doc.steps.is_empty());
}

#[test]
fn unreachable_remote_without_fallback_exits_2() {
    let ws = Workspace::new();
    let mut cmd = stepwise();
    cmd.env("STEPWISE_PROVIDER_URL", "http://127.0.0.1:9")
        .env("STEPWISE_API_KEY", "test-key");
    let out = run(cmd
        .arg("extract")
        .arg("--transcript")
        .arg(ws.path("pancakes.vtt"))
        .arg("--frames")
        .arg(ws.path("frames"))
        .arg("--out")
        .arg(ws.path("remote.json"))
        .args(["--provider", "remote", "--no-fallback"]));
    assert_eq!(out.status.code(), Some(2), "{}", stderr(&out));
    assert!(!ws.path("remote.json").exists());
}

fn ground_truth_of(doc: &TutorialDocument) -> GroundTruth {
    GroundTruth {
        video_id: doc.video_id.clone(),
        duration_s: Some(doc.duration_s),
        objects: doc.objects.iter().map(|o| o.name.clone()).collect(),
        steps: doc
            .steps
            .iter()
            .map(|s| GroundTruthStep {
                description: s.draft.title.clone(),
                start_s: s.draft.start_s,
                end_s: s.draft.end_s,
            })
            .collect(),
    }
}

fn evaluate(pred: &Path, gt: &Path, out: &Path) -> std::process::Output {
    run(stepwise()
        .arg("evaluate")
        .arg("--pred")
        .arg(pred)
        .arg("--gt")
        .arg(gt)
        .arg("--out")
        .arg(out))
}

#[test]
fn evaluate_pred_equal_to_gt() {
    let ws = Workspace::new();
    assert!(ws.extract("p.json", &[]).status.success());
    let gt = ground_truth_of(&load(&ws.path("p.json")));
    std::fs::write(ws.path("gt.json"), serde_json::to_vec(&gt).unwrap()).unwrap();
    let out = evaluate(&ws.path("p.json"), &ws.path("gt.json"), &ws.path("rows/row.json"));
    assert!(out.status.success(), "{}", stderr(&out));
    let row: EvalRow = serde_json::from_slice(&std::fs::read(ws.path("rows/row.json")).unwrap()).unwrap();
    assert_eq!(row.obj_f1, 1.0);
    assert_eq!(row.step_avg_f1, 1.0);
    assert_eq!((row.obj_false_neg, row.obj_false_pos, row.step_false_neg, row.step_false_pos), (0, 0, 0, 0));
    let text = stdout(&out);
    assert!(text.starts_with("Video ID"), "{text}");
    assert!(text.contains("1.00"));
}

#[test]
fn evaluate_mismatched_ids_exits_1() {
    let ws = Workspace::new();
    assert!(ws.extract("p.json", &[]).status.success());
    let mut gt = ground_truth_of(&load(&ws.path("p.json")));
    gt.video_id = "someone-else".into();
    std::fs::write(ws.path("gt.json"), serde_json::to_vec(&gt).unwrap()).unwrap();
    let out = evaluate(&ws.path("p.json"), &ws.path("gt.json"), &ws.path("row.json"));
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("someone-else"));
    assert!(!ws.path("row.json").exists());
}

/// Project and annotation files whose object counts follow one reference row.
fn count_fixture(dir: &Path, r: &ReferenceRow) -> (PathBuf, PathBuf) {
    let (ours, gt) = name_sets(r.ours_obj, r.gt_obj, r.obj_fp);
    let transcript = Transcript::new(r.video_id, 100.0, [(0.0, 100.0, "narration".to_string())]).unwrap();
    let mut doc = TutorialDocument::new(transcript, None);
    doc.objects = ours.iter().map(ObjectEntry::new).collect();
    doc.steps = vec![StepEntry::new(StepDraft::new("all", 0.0, 100.0))];
    doc.edges.step_count = 1;
    let pred = dir.join(format!("{}.project.json", r.video_id));
    std::fs::write(&pred, doc.save()).unwrap();
    let annotation = json!({
        "video_id": r.video_id,
        "duration_s": 100.0,
        "objects": gt,
        "steps": [{"description": "all", "start_s": 0.0, "end_s": 100.0}],
    });
    let gt_path = dir.join(format!("{}.gt.json", r.video_id));
    std::fs::write(&gt_path, annotation.to_string()).unwrap();
    (pred, gt_path)
}

#[test]
fn evaluate_prints_two_decimal_f1() {
    let ws = Workspace::new();
    let r = REFERENCE_ROWS.iter().find(|r| r.video_id == "BAp1AXn82Pg").unwrap();
    let (pred, gt) = count_fixture(ws.dir.path(), r);
    let out = evaluate(&pred, &gt, &ws.path("row.json"));
    assert!(out.status.success(), "{}", stderr(&out));
    let line = stdout(&out).lines().nth(1).unwrap().to_string();
    let cells: Vec<&str> = line.split_whitespace().collect();
    assert_eq!(cells[..6], ["BAp1AXn82Pg", "20", "23", "3", "0", "0.93"]);
}

fn report(dir: &Path) -> std::process::Output {
    run(stepwise().arg("report").arg("--rows").arg(dir))
}

fn mean_line(out: &std::process::Output) -> Vec<String> {
    let text = stdout(out);
    text.lines().last().unwrap().split_whitespace().map(str::to_string).collect()
}

#[test]
fn report_over_reference_rows() {
    let ws = Workspace::new();
    let rows = ws.path("rows");
    std::fs::create_dir(&rows).unwrap();
    for r in REFERENCE_ROWS.iter() {
        std::fs::write(rows.join(format!("{}.json", r.video_id)), serde_json::to_vec(&reconstruct(r)).unwrap()).unwrap();
    }
    let out = report(&rows);
    assert!(out.status.success(), "{}", stderr(&out));
    assert_eq!(stdout(&out).lines().count(), 22);
    // mean, obj FN, obj FP, obj F1, step FN, step FP, step avg F1
    let mean = mean_line(&out);
    assert_eq!(mean[0], "mean");
    assert_eq!(mean[3], "0.88");
    assert_eq!(mean[4], "1.30");
    assert_eq!(mean[5], "0.25");
}

#[test]
fn report_single_row_mean_is_the_row() {
    let ws = Workspace::new();
    let rows = ws.path("rows");
    std::fs::create_dir(&rows).unwrap();
    let row = reconstruct(&REFERENCE_ROWS[1]);
    std::fs::write(rows.join("one.json"), serde_json::to_vec(&row).unwrap()).unwrap();
    let out = run(stepwise().arg("report").arg("--rows").arg(&rows).arg("--json").arg(ws.path("summary.json")));
    assert!(out.status.success(), "{}", stderr(&out));
    let summary: serde_json::Value = serde_json::from_slice(&std::fs::read(ws.path("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["mean_obj_f1"].as_f64().unwrap(), row.obj_f1);
    assert_eq!(summary["mean_step_avg_f1"].as_f64().unwrap(), row.step_avg_f1);
    assert_eq!(summary["mean_obj_false_neg"].as_f64().unwrap(), row.obj_false_neg as f64);
}

#[test]
fn report_on_empty_dir_exits_1() {
    let ws = Workspace::new();
    std::fs::create_dir(ws.path("empty")).unwrap();
    assert_eq!(report(&ws.path("empty")).status.code(), Some(1));
    assert_eq!(report(&ws.path("missing")).status.code(), Some(1));
}
