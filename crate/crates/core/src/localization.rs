//! Bounding boxes for named objects via an open-vocabulary detector, and the
//! choice of one representative detection per object.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::time::Duration;

use base64::Engine;
use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;

use crate::extraction::provider::{http_agent, map_ureq_error, ProviderError, DEFAULT_API_KEY_ENV};
use crate::linker::{match_tokens, normalize_term};
use crate::shots::FrameSample;
use crate::transcript::Transcript;

pub const DEFAULT_MIN_CONFIDENCE: f64 = 0.25;
/// Frames this close to a sentence that mentions an object are sent to the detector.
pub const MENTION_WINDOW_S: f64 = 2.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LocalizationError {
    #[error("invalid bounding box {0:?}")]
    InvalidBox(BoundingBox),
    #[error("confidence {0} outside [0, 1]")]
    InvalidConfidence(f64),
    #[error("detector fixture error: {0}")]
    Fixture(String),
    #[error("cannot read frame {path}: {message}")]
    FrameRead { path: PathBuf, message: String },
    #[error(transparent)]
    Provider(#[from] ProviderError),
}

/// Box in fractions of the frame size.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

impl BoundingBox {
    pub fn new(x: f64, y: f64, w: f64, h: f64) -> Result<Self, LocalizationError> {
        let b = Self { x, y, w, h };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<(), LocalizationError> {
        const EPS: f64 = 1e-9;
        let ok = self.x >= 0.0
            && self.y >= 0.0
            && self.w > 0.0
            && self.h > 0.0
            && self.x + self.w <= 1.0 + EPS
            && self.y + self.h <= 1.0 + EPS;
        if ok {
            Ok(())
        } else {
            Err(LocalizationError::InvalidBox(*self))
        }
    }

    /// Clips into the unit square; `None` when nothing is left.
    pub fn clipped(&self) -> Option<Self> {
        let x0 = self.x.clamp(0.0, 1.0);
        let y0 = self.y.clamp(0.0, 1.0);
        let x1 = (self.x + self.w).clamp(0.0, 1.0);
        let y1 = (self.y + self.h).clamp(0.0, 1.0);
        (x1 > x0 && y1 > y0).then_some(Self {
            x: x0,
            y: y0,
            w: x1 - x0,
            h: y1 - y0,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub object_name: String,
    pub frame_time_s: f64,
    pub image_ref: String,
    #[serde(rename = "box")]
    pub bbox: BoundingBox,
    pub confidence: f64,
}

/// A frame handed to a detector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameRef {
    pub time_s: f64,
    pub image_ref: String,
}

impl From<&FrameSample> for FrameRef {
    fn from(s: &FrameSample) -> Self {
        Self {
            time_s: s.time_s,
            image_ref: s.image_ref.clone(),
        }
    }
}

pub trait DetectorProvider: Send + Sync {
    fn locate(&self, names: &[String], frames: &[FrameRef]) -> Result<Vec<Detection>, LocalizationError>;
}

/// One row of a stub detector fixture file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectorFixture {
    pub name: String,
    pub frame: String,
    #[serde(rename = "box")]
    pub bbox: BoundingBox,
    pub score: f64,
}

/// Replays detections from a fixture list keyed by (object name, frame).
#[derive(Debug, Clone, Default)]
pub struct StubDetector {
    fixtures: Vec<DetectorFixture>,
}

impl StubDetector {
    pub fn new(fixtures: Vec<DetectorFixture>) -> Self {
        let fixtures = fixtures
            .into_iter()
            .map(|mut f| {
                f.name = normalize_term(&f.name).unwrap_or(f.name);
                f
            })
            .collect();
        Self { fixtures }
    }

    /// Reads a JSON array of [`DetectorFixture`].
    pub fn from_file(path: &Path) -> Result<Self, LocalizationError> {
        let text = std::fs::read_to_string(path).map_err(|e| LocalizationError::Fixture(e.to_string()))?;
        let fixtures = serde_json::from_str(&text).map_err(|e| LocalizationError::Fixture(e.to_string()))?;
        Ok(Self::new(fixtures))
    }
}

impl DetectorProvider for StubDetector {
    fn locate(&self, names: &[String], frames: &[FrameRef]) -> Result<Vec<Detection>, LocalizationError> {
        let mut out = Vec::new();
        for frame in frames {
            for f in &self.fixtures {
                if f.frame == frame.image_ref && names.contains(&f.name) {
                    out.push(Detection {
                        object_name: f.name.clone(),
                        frame_time_s: frame.time_s,
                        image_ref: frame.image_ref.clone(),
                        bbox: f.bbox,
                        confidence: f.score.clamp(0.0, 1.0),
                    });
                }
            }
        }
        Ok(out)
    }
}

/// HTTP detector client: `POST {base_url}/detect` with
/// `{"image": <base64>, "names": [...]}`, once per frame. The reply is
/// `{"detections": [{"name", "box": {x, y, w, h}, "score"}]}`.
#[derive(Debug, Clone)]
pub struct RemoteDetector {
    pub base_url: String,
    pub frames_dir: PathBuf,
    pub api_key_env: String,
    pub timeout: Duration,
}

#[derive(Debug, Deserialize)]
struct RemoteDetection {
    name: String,
    #[serde(rename = "box")]
    bbox: BoundingBox,
    score: f64,
}

#[derive(Debug, Deserialize)]
struct RemoteReply {
    detections: Vec<RemoteDetection>,
}

impl RemoteDetector {
    pub fn new(base_url: impl Into<String>, frames_dir: impl Into<PathBuf>) -> Self {
        Self {
            base_url: base_url.into(),
            frames_dir: frames_dir.into(),
            api_key_env: DEFAULT_API_KEY_ENV.to_string(),
            timeout: Duration::from_secs(60),
        }
    }
}

impl DetectorProvider for RemoteDetector {
    fn locate(&self, names: &[String], frames: &[FrameRef]) -> Result<Vec<Detection>, LocalizationError> {
        let key = std::env::var(&self.api_key_env)
            .map_err(|_| ProviderError::MissingCredential(self.api_key_env.clone()))?;
        let url = format!("{}/detect", self.base_url.trim_end_matches('/'));
        let agent = http_agent(self.timeout);
        let mut out = Vec::new();
        for frame in frames {
            let path = self.frames_dir.join(&frame.image_ref);
            let bytes = std::fs::read(&path).map_err(|e| LocalizationError::FrameRead {
                path: path.clone(),
                message: e.to_string(),
            })?;
            let body = json!({
                "image": base64::engine::general_purpose::STANDARD.encode(bytes),
                "names": names,
            });
            let mut response = agent
                .post(&url)
                .header("Authorization", &format!("Bearer {key}"))
                .send_json(body)
                .map_err(map_ureq_error)?;
            let status = response.status().as_u16();
            if !(200..300).contains(&status) {
                let body = response.body_mut().read_to_string().unwrap_or_default();
                return Err(ProviderError::Http { status, body }.into());
            }
            let reply: RemoteReply = response
                .body_mut()
                .read_json()
                .map_err(|e| ProviderError::MalformedResponse(e.to_string()))?;
            for d in reply.detections {
                let (Ok(name), Some(bbox)) = (normalize_term(&d.name), d.bbox.clipped()) else {
                    continue;
                };
                out.push(Detection {
                    object_name: name,
                    frame_time_s: frame.time_s,
                    image_ref: frame.image_ref.clone(),
                    bbox,
                    confidence: d.score.clamp(0.0, 1.0),
                });
            }
        }
        Ok(out)
    }
}

/// Highest-confidence detection of `name` at or above `min_conf`; ties go to
/// the earliest frame.
pub fn best_detection<'a>(name: &str, detections: &'a [Detection], min_conf: f64) -> Option<&'a Detection> {
    detections
        .iter()
        .filter(|d| d.object_name == name && d.confidence >= min_conf)
        .min_by(|a, b| {
            b.confidence
                .total_cmp(&a.confidence)
                .then(a.frame_time_s.total_cmp(&b.frame_time_s))
        })
}

/// Distinct frame times of qualifying detections of `name`, ascending.
pub fn appearance_times(name: &str, detections: &[Detection], min_conf: f64) -> Vec<f64> {
    let mut times: Vec<f64> = detections
        .iter()
        .filter(|d| d.object_name == name && d.confidence >= min_conf)
        .map(|d| d.frame_time_s)
        .collect();
    times.sort_by(f64::total_cmp);
    times.dedup();
    times
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectLocalization {
    pub name: String,
    pub best: Option<Detection>,
    pub appearances: Vec<f64>,
}

/// Which names to ask about in which frame: every object in each thumbnail
/// candidate frame, and each object in the frames around sentences that
/// mention it.
pub fn plan_detector_queries(
    names: &[String],
    transcript: &Transcript,
    samples: &[FrameSample],
    thumbnail_frames: &[FrameRef],
) -> Vec<(FrameRef, Vec<String>)> {
    // keyed by time bits so that frames stay in time order
    let mut plan: BTreeMap<(u64, String), BTreeSet<String>> = BTreeMap::new();
    let key = |f: &FrameRef| (f.time_s.to_bits(), f.image_ref.clone());
    for frame in thumbnail_frames {
        plan.entry(key(frame)).or_default().extend(names.iter().cloned());
    }
    for name in names {
        let needle = match_tokens(name);
        if needle.is_empty() {
            continue;
        }
        for sentence in &transcript.sentences {
            let tokens = match_tokens(&sentence.text);
            if !tokens.windows(needle.len()).any(|w| w == needle.as_slice()) {
                continue;
            }
            let lo = sentence.start_s - MENTION_WINDOW_S;
            let hi = sentence.end_s + MENTION_WINDOW_S;
            for s in samples.iter().filter(|s| s.time_s >= lo && s.time_s <= hi) {
                plan.entry(key(&s.into())).or_default().insert(name.clone());
            }
        }
    }
    plan.into_iter()
        .map(|((bits, image_ref), names)| {
            (
                FrameRef {
                    time_s: f64::from_bits(bits),
                    image_ref,
                },
                names.into_iter().collect(),
            )
        })
        .collect()
}

/// Runs the detector over the planned frames and summarizes each object.
/// Detections are merged in (frame time, name) order.
pub fn localize_objects(
    detector: &dyn DetectorProvider,
    names: &[String],
    transcript: &Transcript,
    samples: &[FrameSample],
    thumbnail_frames: &[FrameRef],
    min_conf: f64,
) -> Result<Vec<ObjectLocalization>, LocalizationError> {
    let mut detections = Vec::new();
    for (frame, queried) in plan_detector_queries(names, transcript, samples, thumbnail_frames) {
        let found = detector.locate(&queried, std::slice::from_ref(&frame))?;
        detections.extend(found.into_iter().filter(|d| queried.contains(&d.object_name)));
    }
    detections.sort_by(|a, b| {
        a.frame_time_s
            .total_cmp(&b.frame_time_s)
            .then_with(|| a.object_name.cmp(&b.object_name))
    });
    Ok(names
        .iter()
        .map(|name| ObjectLocalization {
            name: name.clone(),
            best: best_detection(name, &detections, min_conf).cloned(),
            appearances: appearance_times(name, &detections, min_conf),
        })
        .collect())
}
