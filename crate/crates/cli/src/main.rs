use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use stepwise_core::document::TutorialDocument;
use stepwise_core::localization::LocalizationError;
use stepwise_core::metrics::{aggregate, evaluate_video, render_table, EvalRow, GroundTruth, DEFAULT_MIN_TIOU};
use stepwise_core::pipeline::{run_all, PipelineError, StageContext};
use stepwise_core::shots::load_frame_dir;
use stepwise_core::transcript::{estimate_duration, parse_transcript, TranscriptFormat};
use stepwise_server::settings::{ProviderKind, Settings};
use stepwise_server::AppState;

/// Build editable tutorials from instructional video transcripts and frames.
#[derive(Debug, Parser)]
#[command(name = "stepwise", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run all five stages headlessly and write a project file.
    Extract(ExtractArgs),
    /// Score a project against a ground-truth annotation.
    Evaluate(EvaluateArgs),
    /// Aggregate evaluation rows into a table with a mean line.
    Report(ReportArgs),
    /// Start the HTTP API.
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
struct ExtractArgs {
    #[arg(long)]
    transcript: PathBuf,
    /// Directory of sampled frames named `<seconds>.jpg|png` or with a manifest.json.
    #[arg(long)]
    frames: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Overrides STEPWISE_PROVIDER.
    #[arg(long, value_parser = ["stub", "remote"])]
    provider: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// Exit with status 2 instead of falling back to heuristics when a provider fails.
    #[arg(long)]
    no_fallback: bool,
    /// Video length in seconds; estimated from the last cue when omitted.
    #[arg(long)]
    duration: Option<f64>,
    /// Defaults to the transcript file name without extension.
    #[arg(long)]
    video_id: Option<String>,
    #[arg(long, default_value = "auto")]
    format: TranscriptFormat,
    /// Canned stub responses, one `<sha256 of prompt>.txt` per prompt.
    #[arg(long)]
    fixtures: Option<PathBuf>,
    /// JSON list of stub detections `{name, frame, box, score}`.
    #[arg(long)]
    detector_fixtures: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct EvaluateArgs {
    #[arg(long)]
    pred: PathBuf,
    #[arg(long)]
    gt: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = DEFAULT_MIN_TIOU)]
    min_tiou: f64,
}

#[derive(Debug, Args)]
struct ReportArgs {
    /// Directory of row files written by `evaluate`.
    #[arg(long)]
    rows: PathBuf,
    /// Also write the aggregate report as JSON.
    #[arg(long)]
    json: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ServeArgs {
    /// Overrides STEPWISE_BIND.
    #[arg(long)]
    bind: Option<String>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let result = match cli.command {
        Command::Extract(a) => extract(a),
        Command::Evaluate(a) => evaluate(a),
        Command::Report(a) => report(a),
        Command::Serve(a) => serve(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

/// 2 for provider failures, 1 for everything else.
fn exit_code(e: &anyhow::Error) -> u8 {
    match e.downcast_ref::<PipelineError>() {
        Some(PipelineError::Extraction { .. }) | Some(PipelineError::Localization(LocalizationError::Provider(_))) => 2,
        _ => 1,
    }
}

fn same_file(a: &Path, b: &Path) -> bool {
    match (a.canonicalize(), b.canonicalize()) {
        (Ok(a), Ok(b)) => a == b,
        _ => false,
    }
}

fn write_output(path: &Path, bytes: &[u8], inputs: &[&Path]) -> Result<()> {
    if inputs.iter().any(|i| same_file(i, path)) {
        bail!("refusing to overwrite input file {}", path.display());
    }
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
    }
    std::fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

fn extract(args: ExtractArgs) -> Result<()> {
    let raw = std::fs::read_to_string(&args.transcript)
        .with_context(|| format!("reading transcript {}", args.transcript.display()))?;
    let duration = match args.duration {
        Some(d) => d,
        None => estimate_duration(&raw, args.format)?,
    };
    let video_id = args.video_id.clone().unwrap_or_else(|| {
        args.transcript
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "video".into())
    });
    let parsed = parse_transcript(&video_id, &raw, args.format, duration)
        .with_context(|| format!("parsing {}", args.transcript.display()))?;
    for cue in &parsed.dropped {
        eprintln!("warning: dropped cue {} at {}s ({:?})", cue.cue_index, cue.start_s, cue.reason);
    }
    if parsed.transcript.is_empty() {
        bail!("transcript {} has no usable cues", args.transcript.display());
    }
    let frames = load_frame_dir(&args.frames).with_context(|| format!("loading frames from {}", args.frames.display()))?;

    let mut settings = Settings::from_env()?;
    if let Some(p) = &args.provider {
        settings.provider = p.parse::<ProviderKind>().map_err(anyhow::Error::msg)?;
    }
    if args.fixtures.is_some() {
        settings.stub_fixtures = args.fixtures.clone();
    }
    if args.detector_fixtures.is_some() {
        settings.detector_fixtures = args.detector_fixtures.clone();
    }
    let provider = settings.build_provider()?;
    let detector = settings.build_detector(&args.frames)?;

    let mut ctx = StageContext::new(provider.as_ref(), detector.as_ref(), &frames);
    ctx.extraction.params.seed = args.seed;
    ctx.allow_fallback = !args.no_fallback;

    let mut doc = TutorialDocument::new(parsed.transcript, Some(args.frames.to_string_lossy().into_owned()));
    for r in run_all(&mut doc, &ctx)? {
        for w in &r.warnings {
            eprintln!("warning: stage {}: {w}", r.stage);
        }
    }
    let mut inputs = vec![args.transcript.as_path()];
    inputs.extend(args.fixtures.as_deref());
    inputs.extend(args.detector_fixtures.as_deref());
    write_output(&args.out, &doc.save(), &inputs)?;
    println!(
        "{}: {} steps, {} objects, {} dependencies -> {}",
        doc.video_id,
        doc.steps.len(),
        doc.objects.len(),
        doc.edges.edges.len(),
        args.out.display()
    );
    Ok(())
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_slice(&bytes).with_context(|| format!("parsing {}", path.display()))
}

fn evaluate(args: EvaluateArgs) -> Result<()> {
    let bytes = std::fs::read(&args.pred).with_context(|| format!("reading {}", args.pred.display()))?;
    let doc = TutorialDocument::load(&bytes).with_context(|| format!("loading project {}", args.pred.display()))?;
    let gt: GroundTruth = read_json(&args.gt)?;
    let row = evaluate_video(&doc, &gt, args.min_tiou)?;
    let mut json = serde_json::to_vec_pretty(&row)?;
    json.push(b'\n');
    write_output(&args.out, &json, &[&args.pred, &args.gt])?;
    print!("{}", render_table(std::slice::from_ref(&row), None));
    Ok(())
}

fn report(args: ReportArgs) -> Result<()> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(&args.rows)
        .with_context(|| format!("reading {}", args.rows.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    paths.sort();
    if paths.is_empty() {
        bail!("no row files (*.json) in {}", args.rows.display());
    }
    let rows: Vec<EvalRow> = paths.iter().map(|p| read_json(p)).collect::<Result<_>>()?;
    let summary = aggregate(&rows)?;
    print!("{}", render_table(&rows, Some(&summary)));
    if let Some(out) = &args.json {
        let mut json = serde_json::to_vec_pretty(&summary)?;
        json.push(b'\n');
        let inputs: Vec<&Path> = paths.iter().map(PathBuf::as_path).collect();
        write_output(out, &json, &inputs)?;
    }
    Ok(())
}

fn serve(args: ServeArgs) -> Result<()> {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env()
                .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new("info,tower_http=debug")),
        )
        .init();
    let mut settings = Settings::from_env()?;
    if let Some(bind) = args.bind {
        settings.bind = bind;
    }
    let state = AppState::from_settings(settings)?;
    tokio::runtime::Runtime::new()?.block_on(stepwise_server::serve(state))?;
    Ok(())
}
