#![allow(dead_code)]

use std::collections::BTreeSet;
use std::path::Path;
use std::process::{Command, Output};

use stepwise_core::metrics::{object_f1, EvalRow};

pub const TRANSCRIPT: &str = "WEBVTT

00:00:01.000 --> 00:00:06.000
Hi everyone, today we are making fluffy pancakes.

00:00:06.000 --> 00:00:12.000
You need flour, sugar, two eggs, milk and some butter.

00:00:14.000 --> 00:00:22.000
Put the flour and the sugar in a large bowl.

00:00:22.000 --> 00:00:30.000
Whisk the eggs and the milk in a second bowl.

00:00:45.000 --> 00:00:55.000
Pour the milk mixture into the flour and whisk until smooth.

00:00:55.000 --> 00:01:02.000
Let the batter rest for five minutes.

00:01:20.000 --> 00:01:28.000
Melt the butter in a pan over medium heat.

00:01:28.000 --> 00:01:36.000
Pour a ladle of batter into the pan.

00:01:50.000 --> 00:01:58.000
Flip the pancake when bubbles form and cook the other side.

00:02:20.000 --> 00:02:30.000
Stack the pancakes and serve them with the butter on top.
";

pub const DURATION_S: f64 = 150.0;

/// One frame every 2 s over `[0, duration)`; the colour changes at every cut.
pub fn write_frames(dir: &Path, duration_s: f64, cuts: &[f64]) {
    let mut t = 0.0;
    while t < duration_s {
        let shot = cuts.iter().filter(|c| **c <= t).count();
        let colour = [(shot * 70 % 256) as u8, (255 - shot * 50 % 256) as u8, (shot * 110 % 256) as u8];
        image::RgbImage::from_pixel(16, 9, image::Rgb(colour))
            .save(dir.join(format!("{t:.3}.png")))
            .unwrap();
        t += 2.0;
    }
}

pub fn stepwise() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_stepwise"));
    for (k, _) in std::env::vars() {
        if k.starts_with("STEPWISE_") {
            cmd.env_remove(k);
        }
    }
    cmd
}

pub fn run(cmd: &mut Command) -> Output {
    cmd.output().expect("stepwise binary runs")
}

pub fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

pub fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// One row of the reference evaluation table (20 videos).
#[derive(Debug, Clone, Copy)]
pub struct ReferenceRow {
    pub video_id: &'static str,
    pub ours_obj: usize,
    pub gt_obj: usize,
    pub obj_fn: usize,
    pub obj_fp: usize,
    pub f1: f64,
    pub ours_steps: usize,
    pub gt_steps: usize,
    pub step_fn: usize,
    pub step_fp: usize,
    pub avg_f1: f64,
}

const fn row(
    video_id: &'static str,
    o: (usize, usize, usize, usize, f64),
    s: (usize, usize, usize, usize, f64),
) -> ReferenceRow {
    ReferenceRow {
        video_id,
        ours_obj: o.0,
        gt_obj: o.1,
        obj_fn: o.2,
        obj_fp: o.3,
        f1: o.4,
        ours_steps: s.0,
        gt_steps: s.1,
        step_fn: s.2,
        step_fp: s.3,
        avg_f1: s.4,
    }
}

pub const REFERENCE_ROWS: [ReferenceRow; 20] = [
    row("36FOyZ26ld0", (10, 10, 0, 0, 1.0), (4, 5, 1, 0, 0.95)),
    row("j4UVB6MPsKw", (16, 16, 3, 3, 0.81), (6, 6, 0, 0, 0.80)),
    row("BAp1AXn82Pg", (20, 23, 3, 0, 0.93), (8, 9, 1, 0, 0.72)),
    row("Y-Y9CXGRJPU", (24, 26, 3, 1, 0.92), (9, 12, 3, 3, 0.34)),
    row("L0Gu2KDCS6o", (17, 19, 2, 0, 0.94), (9, 12, 3, 0, 0.22)),
    row("zQ8gThfBDqU", (12, 14, 2, 0, 0.92), (11, 11, 0, 0, 0.69)),
    row("OUMfV1D0_RQ", (8, 6, 1, 3, 0.71), (9, 9, 0, 0, 0.72)),
    row("SX4DCFDKMzc", (13, 18, 6, 1, 0.77), (13, 13, 0, 0, 0.65)),
    row("DU4DiGeLr6Y", (5, 5, 0, 0, 1.0), (6, 7, 1, 0, 0.74)),
    row("VKZI7X-UIe8", (17, 19, 2, 0, 0.94), (7, 8, 1, 0, 0.52)),
    row("Ls969BmW1kw", (13, 13, 3, 3, 0.77), (9, 12, 3, 0, 0.57)),
    row("skZ-nUB_b00", (10, 12, 2, 0, 0.91), (13, 13, 0, 0, 0.70)),
    row("QmPiBCu5_ME", (16, 18, 2, 0, 0.94), (10, 12, 2, 0, 0.71)),
    row("gkkmHizG2As", (8, 9, 1, 0, 0.94), (6, 6, 0, 0, 0.69)),
    row("9f7zmCSzG9E", (25, 25, 2, 2, 0.92), (8, 11, 3, 0, 0.42)),
    row("lj7YK1lIRUM", (16, 16, 0, 0, 1.0), (14, 15, 1, 0, 0.81)),
    row("ZWlq_fWRrzI", (9, 7, 1, 3, 0.75), (7, 9, 2, 0, 0.39)),
    row("B4iWwUzxFWA", (5, 13, 8, 0, 0.56), (4, 6, 2, 0, 0.61)),
    row("p55lnFCorQ4", (11, 9, 1, 3, 0.80), (12, 15, 3, 2, 0.31)),
    row("b-GLI-Vsu9s", (11, 12, 1, 0, 0.96), (10, 10, 0, 0, 0.33)),
];

/// Name sets with `|ours| = ours`, `|gt| = gt` and `fp` names only in ours.
pub fn name_sets(ours: usize, gt: usize, fp: usize) -> (BTreeSet<String>, BTreeSet<String>) {
    let common = ours - fp;
    let shared = (0..common).map(|i| format!("shared {i}"));
    let o = shared.clone().chain((0..fp).map(|i| format!("extra {i}"))).collect();
    let g = shared.chain((0..gt - common).map(|i| format!("missed {i}"))).collect();
    (o, g)
}

/// Evaluation row rebuilt from a reference row's counts; object F1 is
/// recomputed, the step columns are taken as printed.
pub fn reconstruct(r: &ReferenceRow) -> EvalRow {
    let (o, g) = name_sets(r.ours_obj, r.gt_obj, r.obj_fp);
    EvalRow {
        video_id: r.video_id.to_string(),
        ours_obj_count: o.len(),
        gt_obj_count: g.len(),
        obj_false_neg: g.difference(&o).count(),
        obj_false_pos: o.difference(&g).count(),
        obj_f1: object_f1(&o, &g),
        ours_step_count: r.ours_steps,
        gt_step_count: r.gt_steps,
        step_false_neg: r.step_fn,
        step_false_pos: r.step_fp,
        step_avg_f1: r.avg_f1,
    }
}
