//! Timestamped narration: parsing WebVTT, SRT and timed-line transcripts into a
//! canonical sentence list, and rendering it back into prompt lines.

// NaN must fail these range checks, so they stay negated.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::fmt;
use std::str::FromStr;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::Interval;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TranscriptError {
    #[error("no cue could be parsed from the transcript")]
    UnparsableTranscript,
    #[error("invalid timestamp {text:?} on line {line}")]
    InvalidTimestamp { line: usize, text: String },
    #[error("duration must be positive, got {0}")]
    InvalidDuration(f64),
    #[error("unknown transcript format {0:?}")]
    UnknownFormat(String),
    #[error("sentence {index} is invalid: {reason}")]
    InvalidSentence { index: usize, reason: &'static str },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TranscriptFormat {
    Vtt,
    Srt,
    TimedLines,
    #[default]
    Auto,
}

impl FromStr for TranscriptFormat {
    type Err = TranscriptError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "vtt" | "webvtt" => Ok(Self::Vtt),
            "srt" => Ok(Self::Srt),
            "timed-lines" | "timed_lines" | "lines" => Ok(Self::TimedLines),
            "auto" => Ok(Self::Auto),
            other => Err(TranscriptError::UnknownFormat(other.to_string())),
        }
    }
}

impl fmt::Display for TranscriptFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Vtt => "vtt",
            Self::Srt => "srt",
            Self::TimedLines => "timed-lines",
            Self::Auto => "auto",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimedSentence {
    pub index: usize,
    pub start_s: f64,
    pub end_s: f64,
    pub text: String,
}

impl TimedSentence {
    pub fn interval(&self) -> Interval {
        Interval::new(self.start_s, self.end_s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transcript {
    pub video_id: String,
    pub duration_s: f64,
    pub sentences: Vec<TimedSentence>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DropReason {
    EndBeforeStart,
    StartBeyondDuration,
    EmptyText,
}

/// A cue that was present in the input but left out of the transcript.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DroppedCue {
    /// Position of the cue in the input, counting every recognised cue.
    pub cue_index: usize,
    pub start_s: f64,
    pub end_s: Option<f64>,
    pub reason: DropReason,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParsedTranscript {
    pub transcript: Transcript,
    pub format: TranscriptFormat,
    pub dropped: Vec<DroppedCue>,
}

impl ParsedTranscript {
    /// Number of cues recognised in the input, kept or not.
    pub fn cue_count(&self) -> usize {
        self.transcript.sentences.len() + self.dropped.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
struct RawCue {
    start_s: f64,
    end_s: Option<f64>,
    text: String,
}

static TIMED_LINE: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"^\s*[\[(]?\s*(\d{1,2}(?::\d{1,2}){1,2}(?:[.,]\d+)?)\s*[\])]?\s*(?:[-\x{2013}\x{2014}|]\s+)?(.*)$")
        .unwrap()
});
static TAG: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"<[^>]*>").unwrap());

/// Parses a clock timestamp: `SS`, `M:SS`, `MM:SS`, `H:MM:SS`, with an
/// optional `.mmm` or `,mmm` fraction.
pub fn parse_clock(s: &str) -> Option<f64> {
    let s = s.trim();
    if s.is_empty() {
        return None;
    }
    let s = s.replace(',', ".");
    let parts: Vec<&str> = s.split(':').collect();
    if parts.len() > 3 {
        return None;
    }
    let (last, leading) = parts.split_last()?;
    let seconds: f64 = parse_unsigned_decimal(last)?;
    let mut total = 0.0;
    for (i, part) in leading.iter().enumerate() {
        if part.is_empty() || !part.bytes().all(|b| b.is_ascii_digit()) {
            return None;
        }
        let value: f64 = part.parse().ok()?;
        // minutes are bounded when an hour field precedes them
        if leading.len() == 2 && i == 1 && value >= 60.0 {
            return None;
        }
        total = total * 60.0 + value;
    }
    if !leading.is_empty() && seconds >= 60.0 {
        return None;
    }
    Some(total * 60.0 + seconds)
}

fn parse_unsigned_decimal(s: &str) -> Option<f64> {
    let mut parts = s.splitn(2, '.');
    let whole = parts.next()?;
    if whole.is_empty() || !whole.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    if let Some(frac) = parts.next() {
        if frac.is_empty() || !frac.bytes().all(|b| b.is_ascii_digit()) {
            return None;
        }
    }
    s.parse().ok()
}

/// Formats whole seconds as `M:SS`, or `H:MM:SS` from one hour upwards.
pub fn format_clock(seconds: f64) -> String {
    let total = seconds.max(0.0).floor() as u64;
    let (h, m, s) = (total / 3600, (total % 3600) / 60, total % 60);
    if h > 0 {
        format!("{h}:{m:02}:{s:02}")
    } else {
        format!("{m}:{s:02}")
    }
}

fn clean_text(raw: &str) -> String {
    let stripped = TAG.replace_all(raw, " ");
    let decoded = stripped
        .replace("&nbsp;", " ")
        .replace("&lt;", "<")
        .replace("&gt;", ">")
        .replace("&quot;", "\"")
        .replace("&#39;", "'")
        .replace("&amp;", "&");
    decoded.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn normalize_newlines(raw: &str) -> String {
    raw.trim_start_matches('\u{feff}').replace("\r\n", "\n").replace('\r', "\n")
}

/// Splits text into blank-line separated blocks, keeping 1-based line numbers.
fn blocks(text: &str) -> Vec<Vec<(usize, &str)>> {
    let mut out = Vec::new();
    let mut current = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            if !current.is_empty() {
                out.push(std::mem::take(&mut current));
            }
        } else {
            current.push((i + 1, line));
        }
    }
    if !current.is_empty() {
        out.push(current);
    }
    out
}

fn parse_timing_line(line_no: usize, line: &str) -> Result<(f64, f64), TranscriptError> {
    let invalid = || TranscriptError::InvalidTimestamp {
        line: line_no,
        text: line.trim().to_string(),
    };
    let (left, right) = line.split_once("-->").ok_or_else(invalid)?;
    let right = right.split_whitespace().next().ok_or_else(invalid)?;
    let start = parse_clock(left).ok_or_else(invalid)?;
    let end = parse_clock(right).ok_or_else(invalid)?;
    Ok((start, end))
}

/// Shared by WebVTT and SRT: each block holds an optional identifier, one
/// timing line and the cue text. Blocks without a timing line are skipped.
fn scan_cue_blocks(text: &str, skip_header: bool) -> Result<Vec<RawCue>, TranscriptError> {
    let mut cues = Vec::new();
    let mut all = blocks(text);
    if skip_header && !all.is_empty() {
        all.remove(0);
    }
    for block in all {
        let Some(pos) = block.iter().position(|(_, l)| l.contains("-->")) else {
            continue;
        };
        let (line_no, timing) = block[pos];
        let (start, end) = parse_timing_line(line_no, timing)?;
        let body: Vec<&str> = block[pos + 1..].iter().map(|(_, l)| *l).collect();
        cues.push(RawCue {
            start_s: start,
            end_s: Some(end),
            text: clean_text(&body.join(" ")),
        });
    }
    Ok(cues)
}

fn scan_timed_lines(text: &str) -> Vec<RawCue> {
    let mut cues: Vec<RawCue> = Vec::new();
    for line in text.lines() {
        if line.trim().is_empty() {
            continue;
        }
        let timed = TIMED_LINE
            .captures(line)
            .and_then(|c| parse_clock(&c[1]).map(|t| (t, c[2].to_string())));
        match timed {
            Some((start, rest)) => cues.push(RawCue {
                start_s: start,
                end_s: None,
                text: clean_text(&rest),
            }),
            // continuation of the previous cue's text
            None => {
                if let Some(last) = cues.last_mut() {
                    let extra = clean_text(line);
                    if !extra.is_empty() {
                        if !last.text.is_empty() {
                            last.text.push(' ');
                        }
                        last.text.push_str(&extra);
                    }
                }
            }
        }
    }
    cues
}

fn detect_format(text: &str) -> Option<TranscriptFormat> {
    let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty());
    let first = lines.next()?;
    if first.starts_with("WEBVTT") {
        return Some(TranscriptFormat::Vtt);
    }
    let counter_block = first.bytes().all(|b| b.is_ascii_digit())
        && lines.next().is_some_and(|l| l.contains("-->"));
    if counter_block || text.contains("-->") {
        return Some(TranscriptFormat::Srt);
    }
    if TIMED_LINE
        .captures(first)
        .is_some_and(|c| parse_clock(&c[1]).is_some())
    {
        return Some(TranscriptFormat::TimedLines);
    }
    None
}

fn scan(raw: &str, hint: TranscriptFormat) -> Result<(TranscriptFormat, Vec<RawCue>), TranscriptError> {
    let text = normalize_newlines(raw);
    let format = match hint {
        TranscriptFormat::Auto => detect_format(&text).ok_or(TranscriptError::UnparsableTranscript)?,
        other => other,
    };
    let cues = match format {
        TranscriptFormat::Vtt => {
            let has_header = text.trim_start().starts_with("WEBVTT");
            scan_cue_blocks(&text, has_header)?
        }
        TranscriptFormat::Srt => scan_cue_blocks(&text, false)?,
        TranscriptFormat::TimedLines => scan_timed_lines(&text),
        TranscriptFormat::Auto => unreachable!("resolved above"),
    };
    if cues.is_empty() {
        return Err(TranscriptError::UnparsableTranscript);
    }
    Ok((format, cues))
}

/// Parses a raw transcript. Cues that start after `duration_s`, end before
/// they start, or carry no text are dropped and reported rather than failing
/// the parse. Cues without an explicit end (timed lines) end where the next
/// cue begins; the last one ends at `duration_s`.
pub fn parse_transcript(
    video_id: &str,
    raw: &str,
    format_hint: TranscriptFormat,
    duration_s: f64,
) -> Result<ParsedTranscript, TranscriptError> {
    if !(duration_s > 0.0) || !duration_s.is_finite() {
        return Err(TranscriptError::InvalidDuration(duration_s));
    }
    let (format, cues) = scan(raw, format_hint)?;

    let mut dropped = Vec::new();
    let mut kept: Vec<RawCue> = Vec::new();
    for (cue_index, cue) in cues.into_iter().enumerate() {
        let reason = if cue.start_s > duration_s {
            Some(DropReason::StartBeyondDuration)
        } else if cue.end_s.is_some_and(|e| e < cue.start_s) {
            Some(DropReason::EndBeforeStart)
        } else if cue.text.is_empty() {
            Some(DropReason::EmptyText)
        } else {
            None
        };
        match reason {
            Some(reason) => dropped.push(DroppedCue {
                cue_index,
                start_s: cue.start_s,
                end_s: cue.end_s,
                reason,
            }),
            None => kept.push(cue),
        }
    }
    if kept.is_empty() {
        return Err(TranscriptError::UnparsableTranscript);
    }
    kept.sort_by(|a, b| a.start_s.total_cmp(&b.start_s));

    let starts: Vec<f64> = kept.iter().map(|c| c.start_s).collect();
    let sentences = kept
        .into_iter()
        .enumerate()
        .map(|(index, cue)| {
            let implicit_end = starts.get(index + 1).copied().unwrap_or(duration_s);
            let end = cue.end_s.unwrap_or(implicit_end).min(duration_s);
            TimedSentence {
                index,
                start_s: cue.start_s,
                end_s: end.max(cue.start_s),
                text: cue.text,
            }
        })
        .collect();

    Ok(ParsedTranscript {
        transcript: Transcript {
            video_id: video_id.to_string(),
            duration_s,
            sentences,
        },
        format,
        dropped,
    })
}

/// Best-effort video length for inputs that carry no duration: the latest
/// explicit cue end, or one second past the last cue start when cue ends are
/// implicit.
pub fn estimate_duration(raw: &str, format_hint: TranscriptFormat) -> Result<f64, TranscriptError> {
    let (_, cues) = scan(raw, format_hint)?;
    let latest = cues
        .iter()
        .map(|c| match c.end_s {
            Some(end) => end.max(c.start_s),
            None => c.start_s + 1.0,
        })
        .fold(0.0_f64, f64::max);
    Ok(latest.max(1.0))
}

impl Transcript {
    /// Builds a transcript from `(start, end, text)` triples, sorting by start
    /// and assigning consecutive indices.
    pub fn new(
        video_id: impl Into<String>,
        duration_s: f64,
        sentences: impl IntoIterator<Item = (f64, f64, String)>,
    ) -> Result<Self, TranscriptError> {
        if !(duration_s > 0.0) || !duration_s.is_finite() {
            return Err(TranscriptError::InvalidDuration(duration_s));
        }
        let mut items: Vec<(f64, f64, String)> = sentences.into_iter().collect();
        items.sort_by(|a, b| a.0.total_cmp(&b.0));
        let transcript = Self {
            video_id: video_id.into(),
            duration_s,
            sentences: items
                .into_iter()
                .enumerate()
                .map(|(index, (start_s, end_s, text))| TimedSentence {
                    index,
                    start_s,
                    end_s,
                    text,
                })
                .collect(),
        };
        transcript.validate()?;
        Ok(transcript)
    }

    pub fn validate(&self) -> Result<(), TranscriptError> {
        if !(self.duration_s > 0.0) {
            return Err(TranscriptError::InvalidDuration(self.duration_s));
        }
        let mut prev_start = 0.0;
        for (i, s) in self.sentences.iter().enumerate() {
            let fail = |reason| Err(TranscriptError::InvalidSentence { index: i, reason });
            if s.index != i {
                return fail("indices must be consecutive from 0");
            }
            if !(s.start_s >= 0.0) || !(s.start_s <= s.end_s) {
                return fail("start must be non-negative and not after end");
            }
            if s.end_s > self.duration_s {
                return fail("end exceeds duration");
            }
            if s.start_s < prev_start {
                return fail("sentences must be sorted by start");
            }
            if s.text.trim().is_empty() || s.text.contains(['\n', '\r']) {
                return fail("text must be a non-empty single line");
            }
            prev_start = s.start_s;
        }
        Ok(())
    }

    pub fn is_empty(&self) -> bool {
        self.sentences.is_empty()
    }

    /// One `M:SS<tab>text` line per sentence, in sentence order.
    pub fn render_prompt_lines(&self) -> String {
        self.sentences
            .iter()
            .map(|s| format!("{}\t{}", format_clock(s.start_s), s.text))
            .collect::<Vec<_>>()
            .join("\n")
    }

    /// Text of every sentence overlapping `[start_s, end_s]` by more than zero seconds.
    pub fn slice_text(&self, start_s: f64, end_s: f64) -> String {
        let query = Interval::new(start_s, end_s);
        self.sentences
            .iter()
            .filter(|s| crate::metrics::interval_overlap(s.interval(), query) > 0.0)
            .map(|s| s.text.as_str())
            .collect::<Vec<_>>()
            .join(" ")
    }

    /// Sub-transcript over a contiguous run of sentences, re-indexed from 0.
    /// Duration is kept so that timestamps stay absolute.
    pub fn subrange(&self, range: std::ops::Range<usize>) -> Self {
        Self {
            video_id: self.video_id.clone(),
            duration_s: self.duration_s,
            sentences: self.sentences[range]
                .iter()
                .enumerate()
                .map(|(index, s)| TimedSentence { index, ..s.clone() })
                .collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(raw: &str, fmt: TranscriptFormat, dur: f64) -> ParsedTranscript {
        parse_transcript("vid", raw, fmt, dur).unwrap()
    }

    #[test]
    fn timed_lines_inherit_next_start() {
        let p = parse("[00:05] mix the flour\n[00:12] add sugar", TranscriptFormat::TimedLines, 60.0);
        let s = &p.transcript.sentences;
        assert_eq!(s.len(), 2);
        assert_eq!((s[0].start_s, s[0].end_s), (5.0, 12.0));
        assert_eq!((s[1].start_s, s[1].end_s), (12.0, 60.0));
        assert_eq!(s[0].text, "mix the flour");
    }

    #[test]
    fn srt_single_block() {
        let p = parse("1\n00:00:01,000 --> 00:00:04,000\nhello", TranscriptFormat::Srt, 10.0);
        let s = &p.transcript.sentences[0];
        assert_eq!((s.start_s, s.end_s, s.text.as_str()), (1.0, 4.0, "hello"));
    }

    #[test]
    fn auto_detects_all_three_formats() {
        let vtt = "WEBVTT\n\n00:01.000 --> 00:03.500\n<v Host>Hi there</v>\n\n00:04.000 --> 00:06.000\nnext";
        assert_eq!(parse(vtt, TranscriptFormat::Auto, 10.0).format, TranscriptFormat::Vtt);
        let srt = "1\n00:00:01,000 --> 00:00:02,000\na\n\n2\n00:00:03,000 --> 00:00:04,000\nb\n";
        assert_eq!(parse(srt, TranscriptFormat::Auto, 10.0).format, TranscriptFormat::Srt);
        let lines = "0:05 hello\n0:09 world";
        assert_eq!(parse(lines, TranscriptFormat::Auto, 10.0).format, TranscriptFormat::TimedLines);
        let p = parse(vtt, TranscriptFormat::Auto, 10.0);
        assert_eq!(p.transcript.sentences[0].text, "Hi there");
    }

    #[test]
    fn vtt_skips_note_blocks_and_cue_ids() {
        let vtt = "WEBVTT - title\n\nNOTE a comment\nspanning lines\n\nintro\n00:00:01.000 --> 00:00:02.000 align:start\nfirst &amp; only\n";
        let p = parse(vtt, TranscriptFormat::Vtt, 5.0);
        assert_eq!(p.transcript.sentences.len(), 1);
        assert_eq!(p.transcript.sentences[0].text, "first & only");
    }

    #[test]
    fn out_of_range_cues_are_dropped_and_counted() {
        let srt = "1\n00:00:01,000 --> 00:00:04,000\nkeep\n\n\
                   2\n00:01:10,000 --> 00:01:15,000\nbeyond\n\n\
                   3\n00:00:09,000 --> 00:00:05,000\nbackwards\n\n\
                   4\n00:00:20,000 --> 00:00:30,000\nalso kept\n";
        let p = parse(srt, TranscriptFormat::Srt, 60.0);
        assert_eq!(p.transcript.sentences.len(), 2);
        assert_eq!(p.dropped.len(), 2);
        assert_eq!(p.dropped[0].reason, DropReason::StartBeyondDuration);
        assert_eq!(p.dropped[1].reason, DropReason::EndBeforeStart);
        assert_eq!(p.cue_count(), 4);
    }

    #[test]
    fn ends_are_clamped_to_duration() {
        let p = parse("1\n00:00:50,000 --> 00:01:30,000\nlong", TranscriptFormat::Srt, 60.0);
        assert_eq!(p.transcript.sentences[0].end_s, 60.0);
        p.transcript.validate().unwrap();
    }

    #[test]
    fn garbage_is_unparsable() {
        let err = parse_transcript("v", "\u{0}\u{1}garbage", TranscriptFormat::Auto, 10.0).unwrap_err();
        assert_eq!(err, TranscriptError::UnparsableTranscript);
        let err = parse_transcript("v", "just words", TranscriptFormat::TimedLines, 10.0).unwrap_err();
        assert_eq!(err, TranscriptError::UnparsableTranscript);
    }

    #[test]
    fn malformed_timing_line_is_reported() {
        let err = parse_transcript("v", "1\n00:00:xx,000 --> 00:00:02,000\nhi", TranscriptFormat::Srt, 10.0)
            .unwrap_err();
        assert!(matches!(err, TranscriptError::InvalidTimestamp { line: 2, .. }));
    }

    #[test]
    fn clock_parsing_and_formatting() {
        assert_eq!(parse_clock("0:05"), Some(5.0));
        assert_eq!(parse_clock("01:02:03.500"), Some(3723.5));
        assert_eq!(parse_clock("00:00:01,250"), Some(1.25));
        assert_eq!(parse_clock("1:75"), None);
        assert_eq!(parse_clock("a:00"), None);
        assert_eq!(format_clock(5.0), "0:05");
        assert_eq!(format_clock(3723.0), "1:02:03");
        assert_eq!(format_clock(599.9), "9:59");
    }

    #[test]
    fn render_lines() {
        let t = Transcript::new(
            "v",
            4000.0,
            [(5.0, 12.0, "mix".to_string()), (3723.0, 3800.0, "rest".to_string())],
        )
        .unwrap();
        assert_eq!(t.render_prompt_lines(), "0:05\tmix\n1:02:03\trest");
    }

    #[test]
    fn slicing() {
        let t = Transcript::new(
            "v",
            30.0,
            [(5.0, 12.0, "a".to_string()), (12.0, 20.0, "b".to_string())],
        )
        .unwrap();
        assert_eq!(t.slice_text(0.0, 30.0), "a b");
        assert_eq!(t.slice_text(0.0, 0.0), "");
        assert_eq!(t.slice_text(10.0, 13.0), "a b");
        assert_eq!(t.slice_text(12.0, 12.0), "");
        assert_eq!(t.slice_text(0.0, 5.0), "");
    }

    #[test]
    fn continuation_lines_join_previous_cue() {
        let p = parse("[0:01] first part\nsecond part\n[0:04] next", TranscriptFormat::TimedLines, 9.0);
        assert_eq!(p.transcript.sentences[0].text, "first part second part");
    }

    #[test]
    fn estimate_duration_uses_latest_end() {
        let srt = "1\n00:00:01,000 --> 00:00:04,000\na\n\n2\n00:00:05,000 --> 00:00:09,500\nb\n";
        assert_eq!(estimate_duration(srt, TranscriptFormat::Auto).unwrap(), 9.5);
        assert_eq!(estimate_duration("0:10 x", TranscriptFormat::Auto).unwrap(), 11.0);
    }
}
