//! Object name normalization and string matching of objects to steps.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::extraction::StepDraft;
use crate::transcript::Transcript;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum LinkerError {
    #[error("term {0:?} is empty after normalization")]
    EmptyAfterNormalization(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatchMode {
    Description,
    Transcript,
    #[default]
    Both,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatchSource {
    Description,
    Transcript,
    Both,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Association {
    pub object_name: String,
    pub step_index: usize,
    pub source: MatchSource,
}

/// Naive English plural stemming of a single lowercase token.
fn stem(token: &str) -> String {
    let n = token.len();
    if n > 3 && token.ends_with("ies") {
        return format!("{}y", &token[..n - 3]);
    }
    if n > 2 && token.ends_with("es") {
        let base = &token[..n - 2];
        if ["s", "x", "z", "ch", "sh"].iter().any(|suf| base.ends_with(suf)) {
            return base.to_string();
        }
    }
    if n >= 4 && token.ends_with('s') && !token.ends_with("ss") {
        return token[..n - 1].to_string();
    }
    token.to_string()
}

/// Lowercases, strips punctuation and splits into tokens. Hyphens and slashes
/// separate tokens; other punctuation is removed in place.
fn raw_tokens(text: &str) -> Vec<String> {
    let mut cleaned = String::with_capacity(text.len());
    for ch in text.chars() {
        if ch.is_alphanumeric() {
            cleaned.extend(ch.to_lowercase());
        } else if ch.is_whitespace() || matches!(ch, '-' | '/' | '\u{2013}' | '\u{2014}') {
            cleaned.push(' ');
        }
    }
    cleaned.split_whitespace().map(str::to_string).collect()
}

/// Canonical form of an object name: lowercase, punctuation stripped,
/// whitespace collapsed, final token singularized.
pub fn normalize_term(raw: &str) -> Result<String, LinkerError> {
    let mut tokens = raw_tokens(raw);
    let Some(last) = tokens.last_mut() else {
        return Err(LinkerError::EmptyAfterNormalization(raw.to_string()));
    };
    *last = stem(last);
    Ok(tokens.join(" "))
}

/// Token sequence used for matching; every token is singularized so that
/// "wood blocks" in running text lines up with the object "wood block".
pub fn match_tokens(text: &str) -> Vec<String> {
    raw_tokens(text).iter().map(|t| stem(t)).collect()
}

fn contains_run(haystack: &[String], needle: &[String]) -> bool {
    !needle.is_empty() && haystack.windows(needle.len()).any(|w| w == needle)
}

/// Associates each object with every step whose description and/or
/// transcript slice contains the object's tokens as a contiguous run.
/// Output is ordered by step index, then object name.
pub fn match_objects_to_steps(
    objects: &[String],
    steps: &[StepDraft],
    transcript: &Transcript,
    mode: MatchMode,
) -> Vec<Association> {
    let step_tokens: Vec<(Vec<String>, Vec<String>)> = steps
        .iter()
        .map(|s| {
            let description = match_tokens(&s.title);
            let slice = if mode == MatchMode::Description {
                Vec::new()
            } else {
                match_tokens(&transcript.slice_text(s.start_s, s.end_s))
            };
            (description, slice)
        })
        .collect();

    let mut found: BTreeMap<(usize, String), MatchSource> = BTreeMap::new();
    for object in objects {
        let needle = match_tokens(object);
        let Ok(name) = normalize_term(object) else {
            continue;
        };
        for (step_index, (description, slice)) in step_tokens.iter().enumerate() {
            let in_description = mode != MatchMode::Transcript && contains_run(description, &needle);
            let in_transcript = mode != MatchMode::Description && contains_run(slice, &needle);
            let source = match (in_description, in_transcript) {
                (true, true) => MatchSource::Both,
                (true, false) => MatchSource::Description,
                (false, true) => MatchSource::Transcript,
                (false, false) => continue,
            };
            found
                .entry((step_index, name.clone()))
                .and_modify(|existing| {
                    if *existing != source {
                        *existing = MatchSource::Both;
                    }
                })
                .or_insert(source);
        }
    }
    found
        .into_iter()
        .map(|((step_index, object_name), source)| Association {
            object_name,
            step_index,
            source,
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn step(title: &str, start: f64, end: f64) -> StepDraft {
        StepDraft {
            title: title.to_string(),
            start_s: start,
            end_s: end,
        }
    }

    fn transcript(lines: &[(f64, f64, &str)], duration: f64) -> Transcript {
        Transcript::new("v", duration, lines.iter().map(|(a, b, t)| (*a, *b, t.to_string()))).unwrap()
    }

    #[test]
    fn normalization_rules() {
        assert_eq!(normalize_term("Strawberries").unwrap(), "strawberry");
        assert_eq!(normalize_term("wood blocks").unwrap(), "wood block");
        assert_eq!(normalize_term("gas").unwrap(), "gas");
        assert_eq!(normalize_term("Boxes").unwrap(), "box");
        assert_eq!(normalize_term("paint brushes").unwrap(), "paint brush");
        assert_eq!(normalize_term("glass").unwrap(), "glass");
        assert_eq!(normalize_term("  Wood-Glue!! ").unwrap(), "wood glue");
        assert_eq!(normalize_term("baker's  twine").unwrap(), "bakers twine");
        assert_eq!(
            normalize_term("?!").unwrap_err(),
            LinkerError::EmptyAfterNormalization("?!".into())
        );
    }

    #[test]
    fn plural_object_matches_singular_text() {
        let t = transcript(&[(0.0, 10.0, "now attach the screw")], 10.0);
        let steps = [step("attach the screw", 0.0, 10.0)];
        let a = match_objects_to_steps(&["screws".to_string()], &steps, &t, MatchMode::Description);
        assert_eq!(a.len(), 1);
        assert_eq!(a[0].object_name, "screw");

        let steps = [step("attach screws to base", 0.0, 10.0)];
        let a = match_objects_to_steps(&["screw".to_string()], &steps, &t, MatchMode::Description);
        assert_eq!(a.len(), 1);
    }

    #[test]
    fn berries_do_not_match_strawberry() {
        let t = transcript(&[(0.0, 10.0, "wash the berries")], 10.0);
        let steps = [step("wash the berries", 0.0, 10.0)];
        let a = match_objects_to_steps(&["strawberry".to_string()], &steps, &t, MatchMode::Both);
        assert!(a.is_empty());
    }

    #[test]
    fn token_runs_not_substrings() {
        let t = transcript(&[(0.0, 10.0, "flip the pancake")], 10.0);
        let steps = [step("flip the pancake", 0.0, 10.0)];
        let a = match_objects_to_steps(&["pan".to_string()], &steps, &t, MatchMode::Both);
        assert!(a.is_empty());
    }

    #[test]
    fn mode_controls_transcript_lookup() {
        let t = transcript(&[(0.0, 5.0, "grab the wood blocks"), (5.0, 20.0, "glue")], 20.0);
        let steps = [step("prepare the base", 0.0, 10.0)];
        let objects = ["wood block".to_string()];
        assert!(match_objects_to_steps(&objects, &steps, &t, MatchMode::Description).is_empty());
        let both = match_objects_to_steps(&objects, &steps, &t, MatchMode::Both);
        assert_eq!(both.len(), 1);
        assert_eq!(both[0].source, MatchSource::Transcript);
    }

    #[test]
    fn source_reports_both_when_text_and_slice_match() {
        let t = transcript(&[(0.0, 5.0, "cut the board")], 5.0);
        let steps = [step("Cut the board", 0.0, 5.0)];
        let a = match_objects_to_steps(&["board".to_string()], &steps, &t, MatchMode::Both);
        assert_eq!(a[0].source, MatchSource::Both);
    }

    proptest! {
        #[test]
        fn exact_name_in_description_always_matches(word in "[a-z]{3,8}( [a-z]{3,8}){0,2}", pad in "[a-z ]{0,20}") {
            let t = transcript(&[(0.0, 1.0, "x")], 1.0);
            let steps = [step(&format!("{pad} {word} {pad}"), 0.0, 1.0)];
            let a = match_objects_to_steps(std::slice::from_ref(&word), &steps, &t, MatchMode::Description);
            prop_assert_eq!(a.len(), 1);
        }

        #[test]
        fn modes_are_monotone(objs in proptest::collection::vec("[a-d]{3}", 1..6), text in "([a-d]{3} ){0,8}", title in "([a-d]{3} ){0,4}") {
            let t = transcript(&[(0.0, 10.0, &format!("{text}z"))], 10.0);
            let steps = [step(&format!("{title}z"), 0.0, 10.0)];
            let key = |a: &Association| (a.object_name.clone(), a.step_index);
            let d: std::collections::BTreeSet<_> = match_objects_to_steps(&objs, &steps, &t, MatchMode::Description).iter().map(key).collect();
            let b: std::collections::BTreeSet<_> = match_objects_to_steps(&objs, &steps, &t, MatchMode::Both).iter().map(key).collect();
            prop_assert!(d.is_subset(&b));
            let mut rev = objs.clone();
            rev.reverse();
            let r: std::collections::BTreeSet<_> = match_objects_to_steps(&rev, &steps, &t, MatchMode::Both).iter().map(key).collect();
            prop_assert_eq!(b, r);
        }
    }
}
