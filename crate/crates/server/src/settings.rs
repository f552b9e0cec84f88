//! Environment configuration shared by the server and the command line.

use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;
use std::time::Duration;

use stepwise_core::extraction::provider::DEFAULT_API_KEY_ENV;
use stepwise_core::extraction::{GenerationProvider, RemoteProvider, StubProvider};
use stepwise_core::localization::{DetectorProvider, RemoteDetector, StubDetector};
use thiserror::Error;

pub const DEFAULT_BIND: &str = "127.0.0.1:8080";
pub const DEFAULT_MODEL: &str = "gpt-3.5-turbo";
/// How long a stage run may take before the request answers 202 and the
/// client polls instead.
pub const DEFAULT_SYNC_WAIT: Duration = Duration::from_secs(2);

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SettingsError {
    #[error("{var}={value:?} is not valid: {reason}")]
    InvalidValue {
        var: &'static str,
        value: String,
        reason: String,
    },
    #[error("{0} must be set for the remote provider")]
    Missing(&'static str),
    #[error("cannot load detector fixtures: {0}")]
    DetectorFixtures(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ProviderKind {
    #[default]
    Stub,
    Remote,
}

impl FromStr for ProviderKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "stub" => Ok(Self::Stub),
            "remote" => Ok(Self::Remote),
            other => Err(format!("unknown provider {other:?}, expected stub or remote")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Settings {
    pub bind: String,
    pub provider: ProviderKind,
    pub provider_url: Option<String>,
    pub model: String,
    /// Name of the variable holding the API key; read at request time.
    pub api_key_env: String,
    pub detector_url: Option<String>,
    pub detector_fixtures: Option<PathBuf>,
    /// Base for relative frame directories.
    pub frame_root: Option<PathBuf>,
    /// Where project files are kept; in memory only when unset.
    pub data_dir: Option<PathBuf>,
    pub stub_fixtures: Option<PathBuf>,
    pub cors_origin: Option<String>,
    pub sync_wait: Duration,
}

impl Default for Settings {
    fn default() -> Self {
        Self {
            bind: DEFAULT_BIND.to_string(),
            provider: ProviderKind::Stub,
            provider_url: None,
            model: DEFAULT_MODEL.to_string(),
            api_key_env: DEFAULT_API_KEY_ENV.to_string(),
            detector_url: None,
            detector_fixtures: None,
            frame_root: None,
            data_dir: None,
            stub_fixtures: None,
            cors_origin: None,
            sync_wait: DEFAULT_SYNC_WAIT,
        }
    }
}

impl Settings {
    pub fn from_env() -> Result<Self, SettingsError> {
        Self::from_lookup(|k| std::env::var(k).ok())
    }

    /// Reads `STEPWISE_*` variables through `get`; empty values count as unset.
    pub fn from_lookup(get: impl Fn(&str) -> Option<String>) -> Result<Self, SettingsError> {
        let get = |k: &str| get(k).filter(|v| !v.trim().is_empty());
        let mut s = Self::default();
        if let Some(v) = get("STEPWISE_BIND") {
            s.bind = v;
        }
        if let Some(v) = get("STEPWISE_PROVIDER") {
            s.provider = v.parse().map_err(|reason| SettingsError::InvalidValue {
                var: "STEPWISE_PROVIDER",
                value: v.clone(),
                reason,
            })?;
        }
        s.provider_url = get("STEPWISE_PROVIDER_URL");
        if let Some(v) = get("STEPWISE_MODEL") {
            s.model = v;
        }
        if let Some(v) = get("STEPWISE_API_KEY_ENV") {
            s.api_key_env = v;
        }
        s.detector_url = get("STEPWISE_DETECTOR_URL");
        s.detector_fixtures = get("STEPWISE_DETECTOR_FIXTURES").map(PathBuf::from);
        s.frame_root = get("STEPWISE_FRAME_ROOT").map(PathBuf::from);
        s.data_dir = get("STEPWISE_DATA_DIR").map(PathBuf::from);
        s.stub_fixtures = get("STEPWISE_STUB_FIXTURES").map(PathBuf::from);
        s.cors_origin = get("STEPWISE_CORS_ORIGIN");
        if let Some(v) = get("STEPWISE_SYNC_WAIT_MS") {
            let ms: u64 = v.parse().map_err(|e: std::num::ParseIntError| SettingsError::InvalidValue {
                var: "STEPWISE_SYNC_WAIT_MS",
                value: v.clone(),
                reason: e.to_string(),
            })?;
            s.sync_wait = Duration::from_millis(ms);
        }
        Ok(s)
    }

    pub fn build_provider(&self) -> Result<Arc<dyn GenerationProvider>, SettingsError> {
        Ok(match self.provider {
            ProviderKind::Stub => match &self.stub_fixtures {
                Some(dir) => Arc::new(StubProvider::with_fixtures(dir)),
                None => Arc::new(StubProvider::synthetic()),
            },
            ProviderKind::Remote => {
                let url = self
                    .provider_url
                    .clone()
                    .ok_or(SettingsError::Missing("STEPWISE_PROVIDER_URL"))?;
                let mut p = RemoteProvider::new(url, self.model.clone());
                p.api_key_env = self.api_key_env.clone();
                Arc::new(p)
            }
        })
    }

    /// Detector for a project whose frames live in `frames_dir`: the remote
    /// service when configured, else fixtures, else a stub that finds nothing.
    pub fn build_detector(&self, frames_dir: &Path) -> Result<Arc<dyn DetectorProvider>, SettingsError> {
        if let Some(url) = &self.detector_url {
            let mut d = RemoteDetector::new(url.clone(), frames_dir);
            d.api_key_env = self.api_key_env.clone();
            return Ok(Arc::new(d));
        }
        match &self.detector_fixtures {
            Some(path) => StubDetector::from_file(path)
                .map(|d| Arc::new(d) as Arc<dyn DetectorProvider>)
                .map_err(|e| SettingsError::DetectorFixtures(e.to_string())),
            None => Ok(Arc::new(StubDetector::default())),
        }
    }

    pub fn resolve_frames_dir(&self, dir: &str) -> PathBuf {
        let path = Path::new(dir);
        match &self.frame_root {
            Some(root) if path.is_relative() => root.join(path),
            _ => path.to_path_buf(),
        }
    }
}
