use std::collections::{HashMap, HashSet};

use crate::linker::match_tokens;
use crate::transcript::Transcript;

use super::{normalize_steps, ObjectDraft, StepDraft};

const TITLE_WORDS: usize = 8;
const SECONDS_PER_STEP: f64 = 90.0;

/// Onset-to-onset spacing between consecutive sentences; `gaps[i]` separates
/// sentence `i` from sentence `i + 1`.
pub fn onset_gaps(transcript: &Transcript) -> Vec<f64> {
    transcript
        .sentences
        .windows(2)
        .map(|w| w[1].start_s - w[0].start_s)
        .collect()
}

/// Segments the transcript at its `k - 1` largest onset gaps. `k` defaults
/// to `max(3, ceil(duration / 90 s))`; equal gaps favour the earlier one.
/// Segments run from the first sentence's start to the end of the video.
pub fn heuristic_step_extractor(transcript: &Transcript, target_steps: Option<usize>) -> Vec<StepDraft> {
    let sentences = &transcript.sentences;
    if sentences.is_empty() {
        return Vec::new();
    }
    let default_k = ((transcript.duration_s / SECONDS_PER_STEP).ceil() as usize).max(3);
    let k = target_steps.unwrap_or(default_k).max(1);

    let gaps = onset_gaps(transcript);
    let mut order: Vec<usize> = (0..gaps.len()).filter(|&i| gaps[i] > 0.0).collect();
    // stable sort keeps the earlier gap first among equals
    order.sort_by(|&a, &b| gaps[b].total_cmp(&gaps[a]));
    let mut cuts: Vec<usize> = order.into_iter().take(k - 1).collect();
    cuts.sort_unstable();

    let mut firsts = vec![0];
    firsts.extend(cuts.iter().map(|c| c + 1));
    let drafts = firsts
        .iter()
        .enumerate()
        .map(|(seg, &first)| {
            let end = firsts
                .get(seg + 1)
                .map(|&next| sentences[next].start_s)
                .unwrap_or(transcript.duration_s);
            let title = sentences[first]
                .text
                .split_whitespace()
                .take(TITLE_WORDS)
                .collect::<Vec<_>>()
                .join(" ");
            StepDraft::new(title, sentences[first].start_s, end)
        })
        .collect();
    normalize_steps(drafts, transcript.duration_s).unwrap_or_default()
}

const STOPWORDS: &[&str] = &[
    "about", "above", "after", "again", "all", "also", "and", "any", "are", "around", "back", "because",
    "been", "before", "being", "below", "between", "bit", "both", "but", "can", "come", "could", "did",
    "does", "doing", "done", "down", "each", "even", "every", "few", "first", "for", "from", "get",
    "going", "gonna", "good", "got", "great", "had", "has", "have", "having", "her", "here", "him",
    "his", "how", "into", "its", "just", "keep", "know", "let", "like", "little", "look", "make",
    "more", "most", "much", "need", "next", "nice", "not", "now", "off", "okay", "once", "one", "only",
    "other", "our", "out", "over", "own", "put", "really", "right", "same", "see", "she", "should",
    "side", "some", "something", "start", "still", "such", "sure", "take", "than", "that", "the",
    "their", "them", "then", "there", "these", "they", "thing", "things", "this", "those", "through",
    "time", "too", "two", "under", "until", "use", "using", "very", "want", "was", "way", "well",
    "were", "what", "when", "where", "which", "while", "who", "why", "will", "with", "would", "yeah",
    "you", "your", "yours",
];

pub fn default_stoplist() -> HashSet<String> {
    STOPWORDS.iter().map(|w| w.to_string()).collect()
}

/// Frequent non-stopword tokens as object candidates: at least three
/// characters, not numeric, occurring twice or more. Ordered by first
/// occurrence.
pub fn heuristic_object_extractor(transcript: &Transcript, stoplist: &HashSet<String>) -> Vec<ObjectDraft> {
    // stopwords are compared in the same singularized form as the tokens
    let stemmed_stops: HashSet<String> = stoplist.iter().flat_map(|w| match_tokens(w)).collect();
    let mut counts: HashMap<String, usize> = HashMap::new();
    let mut order: Vec<String> = Vec::new();
    for sentence in &transcript.sentences {
        for token in match_tokens(&sentence.text) {
            if stemmed_stops.contains(&token)
                || token.chars().count() < 3
                || token.chars().all(|c| c.is_ascii_digit())
            {
                continue;
            }
            let count = counts.entry(token.clone()).or_insert(0);
            if *count == 0 {
                order.push(token);
            }
            *count += 1;
        }
    }
    order
        .into_iter()
        .filter(|t| counts[t] >= 2)
        .map(|name| ObjectDraft { name })
        .collect()
}
