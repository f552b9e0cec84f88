use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{compute_histogram, FrameSample};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Error)]
pub enum FrameError {
    #[error("cannot read frame directory {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid frame manifest: {0}")]
    Manifest(#[from] serde_json::Error),
    #[error("cannot decode frame {path}: {source}")]
    Decode {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },
    #[error("frame {0} has no pixels")]
    EmptyFrame(String),
    #[error("two frames share the timestamp {0}")]
    DuplicateTime(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub time_s: f64,
    pub file: String,
}

/// Optional `manifest.json` inside a frame directory; when present it
/// replaces filename-based timestamps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameManifest {
    pub video_id: String,
    pub fps: f64,
    pub entries: Vec<ManifestEntry>,
}

fn time_from_name(name: &str) -> Option<f64> {
    let (stem, ext) = name.rsplit_once('.')?;
    if !matches!(ext.to_ascii_lowercase().as_str(), "jpg" | "jpeg" | "png") {
        return None;
    }
    let t: f64 = stem.parse().ok()?;
    (t.is_finite() && t >= 0.0).then_some(t)
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> FrameError + '_ {
    move |source| FrameError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Loads every frame of a directory, computing its histogram. Frames are
/// named `<seconds>.jpg|png` (for example `12.500.jpg`) unless a manifest is
/// present. Image references are paths relative to `dir`. Files that match
/// neither convention are ignored.
pub fn load_frame_dir(dir: &Path) -> Result<Vec<FrameSample>, FrameError> {
    let manifest_path = dir.join(MANIFEST_FILE);
    let mut entries: Vec<(f64, String)> = if manifest_path.is_file() {
        let text = std::fs::read_to_string(&manifest_path).map_err(io_err(&manifest_path))?;
        let manifest: FrameManifest = serde_json::from_str(&text)?;
        manifest.entries.into_iter().map(|e| (e.time_s, e.file)).collect()
    } else {
        let mut found = Vec::new();
        for entry in std::fs::read_dir(dir).map_err(io_err(dir))? {
            let entry = entry.map_err(io_err(dir))?;
            let name = entry.file_name().to_string_lossy().into_owned();
            if let Some(t) = time_from_name(&name) {
                found.push((t, name));
            }
        }
        found
    };
    entries.sort_by(|a, b| a.0.total_cmp(&b.0));
    if let Some(w) = entries.windows(2).find(|w| w[0].0 == w[1].0) {
        return Err(FrameError::DuplicateTime(w[0].0));
    }

    entries
        .into_iter()
        .map(|(time_s, file)| {
            let path = dir.join(&file);
            let image = image::open(&path)
                .map_err(|source| FrameError::Decode {
                    path: path.clone(),
                    source,
                })?
                .to_rgb8();
            let feature = compute_histogram(&image).map_err(|_| FrameError::EmptyFrame(file.clone()))?;
            Ok(FrameSample {
                time_s,
                feature,
                image_ref: file,
            })
        })
        .collect()
}
