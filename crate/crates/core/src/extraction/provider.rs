//! Text-generation providers: an HTTP chat-completion client and an offline
//! stub that replays canned responses.

use std::path::PathBuf;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::json;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::transcript::{format_clock, parse_clock, parse_transcript, TranscriptFormat};

use super::heuristic::{default_stoplist, heuristic_object_extractor, heuristic_step_extractor};
use super::prompt::{LENGTH_PREFIX, OBJECT_INSTRUCTION, STEP_INSTRUCTION};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProviderError {
    #[error("provider timed out")]
    Timeout,
    #[error("provider transport error: {0}")]
    Transport(String),
    #[error("provider returned HTTP {status}: {body}")]
    Http { status: u16, body: String },
    #[error("malformed provider response: {0}")]
    MalformedResponse(String),
    #[error("missing credential: environment variable {0} is not set")]
    MissingCredential(String),
    #[error("no canned response for prompt {0}")]
    NoFixture(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationParams {
    pub max_tokens: u32,
    pub temperature: f32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl Default for GenerationParams {
    fn default() -> Self {
        Self {
            max_tokens: 1024,
            temperature: 0.0,
            seed: None,
        }
    }
}

pub trait GenerationProvider: Send + Sync {
    fn generate(&self, prompt: &str, params: &GenerationParams) -> Result<String, ProviderError>;
}

/// Hex SHA-256 of a prompt; the key under which canned responses are stored.
pub fn prompt_key(prompt: &str) -> String {
    Sha256::digest(prompt.as_bytes())
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

/// Offline provider. Looks up `<fixtures>/<prompt_key>.txt`; when no canned
/// response exists it answers the two known prompts with the heuristic
/// extractors, formatted the way the prompts ask for. Responses do not depend
/// on the seed.
#[derive(Debug, Clone, Default)]
pub struct StubProvider {
    fixtures: Option<PathBuf>,
    synthesize: bool,
}

impl StubProvider {
    /// Stub that synthesizes heuristic answers and reads no fixtures.
    pub fn synthetic() -> Self {
        Self {
            fixtures: None,
            synthesize: true,
        }
    }

    /// Stub that prefers canned responses from `dir` and synthesizes otherwise.
    pub fn with_fixtures(dir: impl Into<PathBuf>) -> Self {
        Self {
            fixtures: Some(dir.into()),
            synthesize: true,
        }
    }

    /// Stub that only replays fixtures and fails on unknown prompts.
    pub fn fixtures_only(dir: impl Into<PathBuf>) -> Self {
        Self {
            fixtures: Some(dir.into()),
            synthesize: false,
        }
    }

    fn synthesize(&self, prompt: &str) -> Option<String> {
        let mut lines = prompt.lines();
        let instruction = lines.next()?;
        let duration = prompt
            .lines()
            .find_map(|l| l.strip_prefix(LENGTH_PREFIX))
            .and_then(parse_clock)?;
        let body: Vec<&str> = prompt
            .lines()
            .filter(|l| l.split_once('\t').is_some_and(|(t, _)| parse_clock(t).is_some()))
            .collect();
        // rendered times are floored, so one extra second keeps every line in range
        let transcript = parse_transcript("stub", &body.join("\n"), TranscriptFormat::TimedLines, duration + 1.0)
            .ok()?
            .transcript;
        if instruction == STEP_INSTRUCTION {
            let steps = heuristic_step_extractor(&transcript, None);
            Some(
                steps
                    .iter()
                    .enumerate()
                    .map(|(i, s)| {
                        format!("{}. [{}–{}] {}", i + 1, format_clock(s.start_s), format_clock(s.end_s), s.title)
                    })
                    .collect::<Vec<_>>()
                    .join("\n"),
            )
        } else if instruction == OBJECT_INSTRUCTION {
            let objects = heuristic_object_extractor(&transcript, &default_stoplist());
            Some(objects.into_iter().map(|o| o.name).collect::<Vec<_>>().join("\n"))
        } else {
            None
        }
    }
}

impl GenerationProvider for StubProvider {
    fn generate(&self, prompt: &str, _params: &GenerationParams) -> Result<String, ProviderError> {
        let key = prompt_key(prompt);
        if let Some(dir) = &self.fixtures {
            let path = dir.join(format!("{key}.txt"));
            if let Ok(text) = std::fs::read_to_string(&path) {
                return Ok(text);
            }
        }
        if self.synthesize {
            if let Some(text) = self.synthesize(prompt) {
                return Ok(text);
            }
        }
        Err(ProviderError::NoFixture(key))
    }
}

/// Always fails with the configured error. Used for fault injection.
#[derive(Debug, Clone)]
pub struct FailingProvider(pub ProviderError);

impl GenerationProvider for FailingProvider {
    fn generate(&self, _prompt: &str, _params: &GenerationParams) -> Result<String, ProviderError> {
        Err(self.0.clone())
    }
}

pub const DEFAULT_API_KEY_ENV: &str = "STEPWISE_API_KEY";

/// Chat-completion client: `POST {base_url}/chat/completions` with a bearer
/// token read from an environment variable at call time.
#[derive(Debug, Clone)]
pub struct RemoteProvider {
    pub base_url: String,
    pub model: String,
    pub api_key_env: String,
    pub timeout: Duration,
}

impl RemoteProvider {
    pub fn new(base_url: impl Into<String>, model: impl Into<String>) -> Self {
        Self {
            base_url: base_url.into(),
            model: model.into(),
            api_key_env: DEFAULT_API_KEY_ENV.to_string(),
            timeout: Duration::from_secs(60),
        }
    }

    pub fn request_body(&self, prompt: &str, params: &GenerationParams) -> serde_json::Value {
        let mut body = json!({
            "model": self.model,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": params.temperature,
            "max_tokens": params.max_tokens,
        });
        if let Some(seed) = params.seed {
            body["seed"] = json!(seed);
        }
        body
    }
}

/// Pulls the generated text out of a chat-completion response body.
pub fn response_text(body: &serde_json::Value) -> Result<String, ProviderError> {
    body.pointer("/choices/0/message/content")
        .and_then(|v| v.as_str())
        .map(str::to_string)
        .ok_or_else(|| ProviderError::MalformedResponse("missing choices[0].message.content".into()))
}

pub(crate) fn map_ureq_error(err: ureq::Error) -> ProviderError {
    match err {
        ureq::Error::Timeout(_) => ProviderError::Timeout,
        other => ProviderError::Transport(other.to_string()),
    }
}

pub(crate) fn http_agent(timeout: Duration) -> ureq::Agent {
    ureq::Agent::config_builder()
        .timeout_global(Some(timeout))
        .http_status_as_error(false)
        .build()
        .into()
}

impl GenerationProvider for RemoteProvider {
    fn generate(&self, prompt: &str, params: &GenerationParams) -> Result<String, ProviderError> {
        let key = std::env::var(&self.api_key_env)
            .map_err(|_| ProviderError::MissingCredential(self.api_key_env.clone()))?;
        let url = format!("{}/chat/completions", self.base_url.trim_end_matches('/'));
        let mut response = http_agent(self.timeout)
            .post(&url)
            .header("Authorization", &format!("Bearer {key}"))
            .send_json(self.request_body(prompt, params))
            .map_err(map_ureq_error)?;
        let status = response.status().as_u16();
        if !(200..300).contains(&status) {
            let body = response.body_mut().read_to_string().unwrap_or_default();
            return Err(ProviderError::Http { status, body });
        }
        let body: serde_json::Value = response
            .body_mut()
            .read_json()
            .map_err(|e| ProviderError::MalformedResponse(e.to_string()))?;
        response_text(&body)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::extraction::{build_object_prompt, build_step_prompt, parse_step_response};
    use crate::transcript::Transcript;

    fn transcript() -> Transcript {
        Transcript::new(
            "v",
            120.0,
            [
                (0.0, 10.0, "grab the screws and the board".to_string()),
                (10.0, 40.0, "drill the board".to_string()),
                (70.0, 90.0, "now the screws go in".to_string()),
            ],
        )
        .unwrap()
    }

    #[test]
    fn canned_fixture_wins() {
        let dir = tempfile::tempdir().unwrap();
        let prompt = build_step_prompt(&transcript(), 4096).unwrap();
        std::fs::write(dir.path().join(format!("{}.txt", prompt_key(&prompt))), "1. [0:00-1:00] canned").unwrap();
        let out = StubProvider::with_fixtures(dir.path())
            .generate(&prompt, &GenerationParams::default())
            .unwrap();
        assert_eq!(out, "1. [0:00-1:00] canned");
        let err = StubProvider::fixtures_only(dir.path())
            .generate("unknown", &GenerationParams::default())
            .unwrap_err();
        assert!(matches!(err, ProviderError::NoFixture(_)));
    }

    #[test]
    fn synthetic_answers_are_parseable_and_deterministic() {
        let stub = StubProvider::synthetic();
        let t = transcript();
        let prompt = build_step_prompt(&t, 4096).unwrap();
        let a = stub.generate(&prompt, &GenerationParams::default()).unwrap();
        let b = stub
            .generate(&prompt, &GenerationParams { seed: Some(7), ..Default::default() })
            .unwrap();
        assert_eq!(a, b);
        let steps = parse_step_response(&a, t.duration_s).unwrap();
        assert_eq!(steps.last().unwrap().end_s, 120.0);

        let objects = stub
            .generate(&build_object_prompt(&t, 4096).unwrap(), &GenerationParams::default())
            .unwrap();
        assert_eq!(objects, "screw\nboard");
    }

    #[test]
    fn remote_request_shape() {
        let p = RemoteProvider::new("http://localhost:1", "gpt-test");
        let body = p.request_body("hi", &GenerationParams { seed: Some(3), ..Default::default() });
        assert_eq!(body["model"], "gpt-test");
        assert_eq!(body["messages"][0]["content"], "hi");
        assert_eq!(body["temperature"], 0.0);
        assert_eq!(body["seed"], 3);
        let reply = json!({"choices": [{"message": {"role": "assistant", "content": "ok"}}]});
        assert_eq!(response_text(&reply).unwrap(), "ok");
        assert!(response_text(&json!({})).is_err());
    }

    #[test]
    fn unreachable_remote_is_a_transport_error() {
        std::env::set_var("STEPWISE_TEST_KEY_UNREACHABLE", "k");
        let mut p = RemoteProvider::new("http://127.0.0.1:9", "m");
        p.api_key_env = "STEPWISE_TEST_KEY_UNREACHABLE".into();
        p.timeout = Duration::from_secs(2);
        let err = p.generate("x", &GenerationParams::default()).unwrap_err();
        assert!(matches!(err, ProviderError::Transport(_) | ProviderError::Timeout));
    }

    #[test]
    fn missing_key_is_reported() {
        let mut p = RemoteProvider::new("http://127.0.0.1:9", "m");
        p.api_key_env = "STEPWISE_TEST_KEY_THAT_IS_NOT_SET".into();
        assert_eq!(
            p.generate("x", &GenerationParams::default()),
            Err(ProviderError::MissingCredential("STEPWISE_TEST_KEY_THAT_IS_NOT_SET".into()))
        );
    }
}
