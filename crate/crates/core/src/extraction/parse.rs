use std::collections::HashSet;
use std::sync::LazyLock;

use regex::Regex;

use crate::linker::normalize_term;
use crate::transcript::parse_clock;

use super::{ExtractionError, ObjectDraft, StepDraft};

pub const MAX_TITLE_CHARS: usize = 120;

const TS: &str = r"(?:\d{1,2}(?::\d{1,2}){1,2}(?:\.\d+)?|\d+(?:\.\d+)?\s?s(?:ec(?:ond)?s?)?\b)";

static RANGE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(&format!(r"(?i)({TS})\s*(?:-|\x{{2013}}|\x{{2014}}|\bto\b)\s*({TS})")).unwrap());
static SINGLE: LazyLock<Regex> = LazyLock::new(|| Regex::new(&format!(r"(?i){TS}")).unwrap());
static ITEM_PREFIX: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?i)^\s*(?:step\s*\d+\b\s*[:.)\-–]?|\d{1,3}\s*[.)]|[-*•]|#+)\s*").unwrap()
});
static EMPTY_BRACKETS: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"\[\s*[:,;]?\s*\]|\(\s*[:,;]?\s*\)").unwrap());
static PARENTHETICAL: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\([^)]*\)|\[[^\]]*\]").unwrap());

fn parse_ts(token: &str) -> Option<f64> {
    let t = token.trim().to_ascii_lowercase();
    if t.contains(':') {
        return parse_clock(&t);
    }
    let digits = t.trim_end_matches(|c: char| c.is_ascii_alphabetic()).trim();
    digits.parse().ok()
}

fn trim_title(s: &str) -> &str {
    s.trim_matches(|c: char| c.is_whitespace() || matches!(c, ':' | '-' | '\u{2013}' | '\u{2014}' | ',' | ';' | '|' | '.'))
}

/// Truncates at a word boundary so that the result fits in `MAX_TITLE_CHARS`.
fn cap_title(title: &str) -> String {
    if title.chars().count() <= MAX_TITLE_CHARS {
        return title.to_string();
    }
    let mut out = String::new();
    for word in title.split_whitespace() {
        let extra = if out.is_empty() { 0 } else { 1 };
        if out.chars().count() + extra + word.chars().count() > MAX_TITLE_CHARS {
            break;
        }
        if extra == 1 {
            out.push(' ');
        }
        out.push_str(word);
    }
    if out.is_empty() {
        title.chars().take(MAX_TITLE_CHARS).collect()
    } else {
        out
    }
}

/// "Time:", "Start - End" and similar leftovers once the timestamps are gone.
fn is_label_only(title: &str) -> bool {
    const LABELS: [&str; 8] = ["time", "times", "timestamp", "start", "end", "from", "until", "duration"];
    !title.is_empty()
        && title
            .split(|c: char| !c.is_alphanumeric())
            .filter(|w| !w.is_empty())
            .all(|w| LABELS.contains(&w.to_lowercase().as_str()))
}

#[derive(Debug)]
struct Item {
    title: String,
    start: Option<f64>,
    end: Option<f64>,
}

/// Extracts `(title, start, end)` items from a free-text step list.
///
/// Ranges may be joined by a hyphen, an en or em dash, or `to`; a lone timestamp sets only
/// the start, with the end taken from the next timed item. List items with no
/// timestamp at all share the gap between their timed neighbours. Everything
/// is clamped to `[0, duration_s]`; degenerate intervals are left for
/// [`normalize_steps`] to drop.
pub fn parse_step_response(response: &str, duration_s: f64) -> Result<Vec<StepDraft>, ExtractionError> {
    let mut items: Vec<Item> = Vec::new();
    for line in response.lines() {
        if line.trim().is_empty() {
            continue;
        }
        let (times, rest) = if let Some(c) = RANGE.captures(line) {
            let whole = c.get(0).unwrap();
            let times = (parse_ts(&c[1]), parse_ts(&c[2]));
            (Some(times), format!("{}{}", &line[..whole.start()], &line[whole.end()..]))
        } else if let Some(m) = SINGLE.find(line) {
            (
                Some((parse_ts(m.as_str()), None)),
                format!("{}{}", &line[..m.start()], &line[m.end()..]),
            )
        } else {
            (None, line.to_string())
        };
        let rest = EMPTY_BRACKETS.replace_all(&rest, "");
        let is_item = ITEM_PREFIX.is_match(&rest);
        let mut title = trim_title(&ITEM_PREFIX.replace(&rest, "")).to_string();
        if is_label_only(&title) {
            title.clear();
        }

        match times {
            Some((start, end)) if start.is_some() => {
                // a bare time line belongs to the preceding untimed item
                if title.is_empty() {
                    if let Some(last) = items.last_mut().filter(|l| l.start.is_none()) {
                        last.start = start;
                        last.end = end;
                        continue;
                    }
                }
                items.push(Item { title, start, end });
            }
            _ if is_item => items.push(Item {
                title,
                start: None,
                end: None,
            }),
            _ => {}
        }
    }
    if items.is_empty() {
        return Err(ExtractionError::NoStepsParsed);
    }

    let clamp = |v: f64| v.clamp(0.0, duration_s);
    let n = items.len();
    // missing ends come from the next item with a start
    for i in 0..n {
        if items[i].start.is_some() && items[i].end.is_none() {
            let next = items[i + 1..].iter().find_map(|it| it.start).unwrap_or(duration_s);
            items[i].end = Some(next);
        }
    }
    // untimed runs split the gap between their neighbours evenly
    let mut i = 0;
    while i < n {
        if items[i].start.is_some() {
            i += 1;
            continue;
        }
        let run_end = (i..n).find(|&j| items[j].start.is_some()).unwrap_or(n);
        let lo = if i == 0 { 0.0 } else { items[i - 1].end.unwrap_or(0.0) };
        let hi = items.get(run_end).and_then(|it| it.start).unwrap_or(duration_s);
        let (lo, hi) = (clamp(lo), clamp(hi).max(clamp(lo)));
        let width = (hi - lo) / (run_end - i) as f64;
        for (k, item) in items[i..run_end].iter_mut().enumerate() {
            item.start = Some(lo + width * k as f64);
            item.end = Some(lo + width * (k + 1) as f64);
        }
        i = run_end;
    }

    Ok(items
        .into_iter()
        .enumerate()
        .map(|(i, item)| {
            let title = if item.title.is_empty() {
                format!("Step {}", i + 1)
            } else {
                cap_title(&item.title)
            };
            StepDraft {
                title,
                start_s: clamp(item.start.unwrap_or(0.0)),
                end_s: clamp(item.end.unwrap_or(duration_s)),
            }
        })
        .collect())
}

/// Sorts steps by start, trims each step's end back to the next step's start
/// where they overlap, and drops steps left with zero or negative length.
pub fn normalize_steps(drafts: Vec<StepDraft>, duration_s: f64) -> Result<Vec<StepDraft>, ExtractionError> {
    if drafts.is_empty() {
        return Ok(drafts);
    }
    let mut sorted: Vec<StepDraft> = drafts
        .into_iter()
        .filter(|d| d.start_s.is_finite() && d.end_s.is_finite())
        .map(|mut d| {
            d.start_s = d.start_s.clamp(0.0, duration_s);
            d.end_s = d.end_s.clamp(0.0, duration_s);
            d
        })
        .collect();
    sorted.sort_by(|a, b| a.start_s.total_cmp(&b.start_s).then(a.end_s.total_cmp(&b.end_s)));

    let mut out: Vec<StepDraft> = Vec::with_capacity(sorted.len());
    for step in sorted {
        if let Some(last) = out.last_mut() {
            if last.end_s > step.start_s {
                last.end_s = step.start_s;
            }
            if last.end_s <= last.start_s {
                out.pop();
            }
        }
        out.push(step);
    }
    out.retain(|s| s.end_s > s.start_s);
    if out.is_empty() {
        return Err(ExtractionError::AllStepsDegenerate);
    }
    Ok(out)
}

const LEADING_FILLERS: [&str; 6] = ["and ", "or ", "a ", "an ", "the ", "some "];
const MAX_OBJECT_WORDS: usize = 6;

/// Splits a free-text object list into normalized, deduplicated names.
pub fn parse_object_response(response: &str) -> Result<Vec<ObjectDraft>, ExtractionError> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for line in response.lines() {
        let line = line.trim();
        // "Ingredients:" headings carry no object; "Tools: hammer, nails" does
        let line = match line.split_once(':') {
            Some((_, after)) if after.trim().is_empty() => continue,
            Some((before, after)) if !before.contains(',') && before.split_whitespace().count() <= 3 => after,
            _ => line,
        };
        let line = PARENTHETICAL.replace_all(line, " ");
        for piece in line.split([',', ';']) {
            let mut piece = ITEM_PREFIX.replace(piece, "").trim().to_string();
            loop {
                let lower = piece.to_lowercase();
                match LEADING_FILLERS.iter().find(|f| lower.starts_with(*f)) {
                    Some(f) => piece = piece[f.len()..].trim_start().to_string(),
                    None => break,
                }
            }
            let piece = piece.trim_matches(|c: char| !c.is_alphanumeric());
            if piece.is_empty() || piece.split_whitespace().count() > MAX_OBJECT_WORDS {
                continue;
            }
            if let Ok(name) = normalize_term(piece) {
                if seen.insert(name.clone()) {
                    out.push(ObjectDraft { name });
                }
            }
        }
    }
    if out.is_empty() {
        return Err(ExtractionError::NoObjectsParsed);
    }
    Ok(out)
}
