//! Step and object extraction from transcripts through a text-generation
//! provider, with deterministic heuristic fallbacks.

mod heuristic;
mod parse;
mod prompt;
pub mod provider;

use std::thread;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::transcript::Transcript;

pub use heuristic::{default_stoplist, heuristic_object_extractor, heuristic_step_extractor, onset_gaps};
pub use parse::{normalize_steps, parse_object_response, parse_step_response, MAX_TITLE_CHARS};
pub use prompt::{
    build_object_prompt, build_step_prompt, estimate_tokens, OBJECT_INSTRUCTION, STEP_INSTRUCTION,
};
pub use provider::{
    prompt_key, FailingProvider, GenerationParams, GenerationProvider, ProviderError, RemoteProvider, StubProvider,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExtractionError {
    #[error("transcript has no sentences")]
    EmptyTranscript,
    #[error("prompt needs about {estimated} tokens, limit is {limit}")]
    PromptTooLong { estimated: usize, limit: usize },
    #[error("no steps could be parsed from the response")]
    NoStepsParsed,
    #[error("every parsed step has zero length")]
    AllStepsDegenerate,
    #[error("no objects could be parsed from the response")]
    NoObjectsParsed,
    #[error(transparent)]
    Provider(#[from] ProviderError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepDraft {
    pub title: String,
    pub start_s: f64,
    pub end_s: f64,
}

impl StepDraft {
    pub fn new(title: impl Into<String>, start_s: f64, end_s: f64) -> Self {
        Self {
            title: title.into(),
            start_s,
            end_s,
        }
    }

    pub fn interval(&self) -> crate::Interval {
        crate::Interval::new(self.start_s, self.end_s)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ObjectDraft {
    pub name: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtractionConfig {
    /// Upper bound on the estimated prompt size before the transcript is chunked.
    pub max_prompt_tokens: usize,
    pub params: GenerationParams,
}

impl Default for ExtractionConfig {
    fn default() -> Self {
        Self {
            max_prompt_tokens: 4096,
            params: GenerationParams::default(),
        }
    }
}

/// Runs `f` on the whole transcript, or, when the prompt would be too long,
/// on the two halves either side of the largest onset gap, recursively.
fn chunked<T>(
    transcript: &Transcript,
    f: &impl Fn(&Transcript) -> Result<Vec<T>, ExtractionError>,
) -> Result<Vec<T>, ExtractionError> {
    match f(transcript) {
        Err(ExtractionError::PromptTooLong { .. }) if transcript.sentences.len() > 1 => {
            let gaps = onset_gaps(transcript);
            let mut split = 0;
            for (i, g) in gaps.iter().enumerate() {
                if *g > gaps[split] {
                    split = i;
                }
            }
            let n = transcript.sentences.len();
            let mut out = chunked(&transcript.subrange(0..split + 1), f)?;
            out.extend(chunked(&transcript.subrange(split + 1..n), f)?);
            Ok(out)
        }
        other => other,
    }
}

/// Prompts for steps, parses and normalizes the response. Long transcripts
/// are chunked and the per-chunk steps concatenated before normalization.
pub fn extract_steps(
    provider: &dyn GenerationProvider,
    transcript: &Transcript,
    config: &ExtractionConfig,
) -> Result<Vec<StepDraft>, ExtractionError> {
    let drafts = chunked(transcript, &|chunk| {
        let prompt = build_step_prompt(chunk, config.max_prompt_tokens)?;
        let response = provider.generate(&prompt, &config.params)?;
        parse_step_response(&response, transcript.duration_s)
    })?;
    normalize_steps(drafts, transcript.duration_s)
}

/// Prompts for the tutorial's objects; chunked results are merged and deduplicated.
pub fn extract_objects(
    provider: &dyn GenerationProvider,
    transcript: &Transcript,
    config: &ExtractionConfig,
) -> Result<Vec<ObjectDraft>, ExtractionError> {
    let objects = chunked(transcript, &|chunk| {
        let prompt = build_object_prompt(chunk, config.max_prompt_tokens)?;
        let response = provider.generate(&prompt, &config.params)?;
        parse_object_response(&response)
    })?;
    let mut seen = std::collections::HashSet::new();
    Ok(objects.into_iter().filter(|o| seen.insert(o.name.clone())).collect())
}

/// Issues the step and object prompts concurrently.
pub fn extract_both(
    provider: &dyn GenerationProvider,
    transcript: &Transcript,
    config: &ExtractionConfig,
) -> (
    Result<Vec<StepDraft>, ExtractionError>,
    Result<Vec<ObjectDraft>, ExtractionError>,
) {
    thread::scope(|scope| {
        let steps = scope.spawn(|| extract_steps(provider, transcript, config));
        let objects = extract_objects(provider, transcript, config);
        (steps.join().expect("step extraction panicked"), objects)
    })
}
