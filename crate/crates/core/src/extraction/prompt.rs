use crate::transcript::{format_clock, Transcript};

use super::ExtractionError;

pub const STEP_INSTRUCTION: &str =
    "Summarize the video transcripts in several steps and find start and end time for each step.";

pub const OBJECT_INSTRUCTION: &str =
    "Find out what objects/ingredients/ tools/ equipment are required in this tutorial.";

const STEP_FORMAT: &str = "Answer with a numbered list, one step per line, in the form \
\"N. [start–end] description\" with times written as M:SS.";

const OBJECT_FORMAT: &str = "Answer with one object per line and nothing else.";

pub(crate) const LENGTH_PREFIX: &str = "Video length: ";

const TRANSCRIPT_HEADER: &str = "Transcript (one sentence per line, prefixed by its start time):";

/// Rough token count: one token per four characters, rounded up.
pub fn estimate_tokens(text: &str) -> usize {
    text.chars().count().div_ceil(4)
}

fn assemble(
    instruction: &str,
    directive: &str,
    transcript: &Transcript,
    limit: usize,
) -> Result<String, ExtractionError> {
    if transcript.is_empty() {
        return Err(ExtractionError::EmptyTranscript);
    }
    let prompt = format!(
        "{instruction}\n{directive}\n{LENGTH_PREFIX}{}\n\n{TRANSCRIPT_HEADER}\n{}",
        format_clock(transcript.duration_s),
        transcript.render_prompt_lines()
    );
    let estimated = estimate_tokens(&prompt);
    if estimated > limit {
        return Err(ExtractionError::PromptTooLong { estimated, limit });
    }
    Ok(prompt)
}

pub fn build_step_prompt(transcript: &Transcript, limit: usize) -> Result<String, ExtractionError> {
    assemble(STEP_INSTRUCTION, STEP_FORMAT, transcript, limit)
}

pub fn build_object_prompt(transcript: &Transcript, limit: usize) -> Result<String, ExtractionError> {
    assemble(OBJECT_INSTRUCTION, OBJECT_FORMAT, transcript, limit)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_sentences() -> Transcript {
        Transcript::new(
            "v",
            60.0,
            [(5.0, 12.0, "mix the flour".to_string()), (12.0, 60.0, "add sugar".to_string())],
        )
        .unwrap()
    }

    #[test]
    fn step_prompt_layout() {
        let p = build_step_prompt(&two_sentences(), 4096).unwrap();
        assert!(p.starts_with(STEP_INSTRUCTION));
        assert!(p.contains("0:05\tmix the flour\n0:12\tadd sugar"));
        assert!(p.contains("N. [start–end] description"));
        assert!(!p.contains(OBJECT_INSTRUCTION));
    }

    #[test]
    fn object_prompt_layout() {
        let p = build_object_prompt(&two_sentences(), 4096).unwrap();
        assert!(p.starts_with(OBJECT_INSTRUCTION));
        assert!(!p.contains(STEP_INSTRUCTION));
        assert!(p.contains("one object per line"));
    }

    #[test]
    fn empty_transcript_is_rejected() {
        let t = Transcript {
            video_id: "v".into(),
            duration_s: 10.0,
            sentences: vec![],
        };
        assert_eq!(build_step_prompt(&t, 4096), Err(ExtractionError::EmptyTranscript));
    }

    #[test]
    fn three_hour_transcript_exceeds_limit() {
        // one 8-word sentence every 4 s for three hours
        let lines = (0..2700).map(|i| {
            let s = i as f64 * 4.0;
            (s, s + 4.0, "now we carefully keep stirring the sauce gently".to_string())
        });
        let t = Transcript::new("v", 10_800.0, lines).unwrap();
        let body_chars: usize = t.render_prompt_lines().chars().count();
        assert!(body_chars / 4 > 4096);
        for build in [build_step_prompt, build_object_prompt] {
            match build(&t, 4096) {
                Err(ExtractionError::PromptTooLong { estimated, limit }) => {
                    assert_eq!(limit, 4096);
                    assert!(estimated >= body_chars / 4);
                }
                other => panic!("expected PromptTooLong, got {other:?}"),
            }
        }
    }
}
