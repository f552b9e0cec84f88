//! In-memory project registry with optional write-through to disk.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, RwLock};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;
use stepwise_core::document::{TutorialDocument, STAGE_COUNT};
use stepwise_core::pipeline::StageReport;
use stepwise_core::shots::FrameSample;
use tokio::sync::OnceCell;

use crate::error::ApiError;

/// Progress of the most recent run request for one stage.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "state", rename_all = "snake_case")]
pub enum JobState {
    Idle,
    Running,
    Done { report: StageReport },
    Failed { error: String, message: String },
}

pub struct Project {
    pub id: String,
    /// Seconds since the Unix epoch.
    pub created_at: u64,
    /// Held for the whole of every mutation, stage runs included.
    pub(crate) write: tokio::sync::Mutex<()>,
    snapshot: RwLock<Arc<TutorialDocument>>,
    frames: OnceCell<Arc<Vec<FrameSample>>>,
    jobs: Mutex<Vec<JobState>>,
}

impl Project {
    fn new(id: String, created_at: u64, doc: TutorialDocument) -> Self {
        Self {
            id,
            created_at,
            write: tokio::sync::Mutex::new(()),
            snapshot: RwLock::new(Arc::new(doc)),
            frames: OnceCell::new(),
            jobs: Mutex::new(vec![JobState::Idle; STAGE_COUNT]),
        }
    }

    /// Current committed document. Readers never wait for writers.
    pub fn snapshot(&self) -> Arc<TutorialDocument> {
        self.snapshot.read().expect("snapshot lock").clone()
    }

    pub(crate) fn commit(&self, doc: TutorialDocument) {
        *self.snapshot.write().expect("snapshot lock") = Arc::new(doc);
    }

    pub fn job(&self, stage: usize) -> JobState {
        self.jobs.lock().expect("job lock")[stage - 1].clone()
    }

    pub(crate) fn set_job(&self, stage: usize, state: JobState) {
        self.jobs.lock().expect("job lock")[stage - 1] = state;
    }

    /// Frames of the project's frame directory, loaded once. No directory
    /// means no frames.
    pub(crate) async fn frames(&self, dir: Option<PathBuf>) -> Result<Arc<Vec<FrameSample>>, ApiError> {
        self.frames
            .get_or_try_init(|| async move {
                let Some(dir) = dir else {
                    return Ok(Arc::new(Vec::new()));
                };
                tokio::task::spawn_blocking(move || stepwise_core::shots::load_frame_dir(&dir))
                    .await
                    .map_err(|e| ApiError::Internal(e.to_string()))?
                    .map(Arc::new)
                    .map_err(ApiError::from)
            })
            .await
            .cloned()
    }
}

pub struct ProjectStore {
    projects: RwLock<HashMap<String, Arc<Project>>>,
    counter: AtomicU64,
    data_dir: Option<PathBuf>,
}

fn now_secs() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

impl ProjectStore {
    /// Opens the store, reading any project files already in `data_dir`.
    pub fn open(data_dir: Option<PathBuf>) -> std::io::Result<Self> {
        let store = Self {
            projects: RwLock::new(HashMap::new()),
            counter: AtomicU64::new(0),
            data_dir,
        };
        if let Some(dir) = &store.data_dir {
            std::fs::create_dir_all(dir)?;
            let mut map = store.projects.write().expect("store lock");
            for entry in std::fs::read_dir(dir)? {
                let path = entry?.path();
                if path.extension().is_none_or(|e| e != "json") {
                    continue;
                }
                let Some(id) = path.file_stem().map(|s| s.to_string_lossy().into_owned()) else {
                    continue;
                };
                match std::fs::read(&path).map(|b| TutorialDocument::load(&b)) {
                    Ok(Ok(doc)) => {
                        let created = std::fs::metadata(&path)
                            .and_then(|m| m.modified())
                            .ok()
                            .and_then(|t| t.duration_since(UNIX_EPOCH).ok())
                            .map_or(0, |d| d.as_secs());
                        map.insert(id.clone(), Arc::new(Project::new(id, created, doc)));
                    }
                    Ok(Err(e)) => tracing::warn!(path = %path.display(), error = %e, "skipping unreadable project"),
                    Err(e) => tracing::warn!(path = %path.display(), error = %e, "skipping unreadable project"),
                }
            }
        }
        Ok(store)
    }

    pub fn create(&self, doc: TutorialDocument) -> Result<Arc<Project>, ApiError> {
        let n = self.counter.fetch_add(1, Ordering::Relaxed);
        let nanos = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_nanos()).unwrap_or(0);
        let id = format!("p{nanos:x}{n:04x}");
        self.persist(&id, &doc)?;
        let project = Arc::new(Project::new(id.clone(), now_secs(), doc));
        self.projects.write().expect("store lock").insert(id, project.clone());
        Ok(project)
    }

    pub fn get(&self, id: &str) -> Result<Arc<Project>, ApiError> {
        self.projects
            .read()
            .expect("store lock")
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::ProjectNotFound(id.to_string()))
    }

    /// Writes the project file when a data directory is configured.
    pub fn persist(&self, id: &str, doc: &TutorialDocument) -> Result<(), ApiError> {
        let Some(dir) = &self.data_dir else {
            return Ok(());
        };
        write_atomic(&dir.join(format!("{id}.json")), &doc.save()).map_err(|e| ApiError::Internal(e.to_string()))
    }
}

fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let tmp = path.with_extension("json.tmp");
    std::fs::write(&tmp, bytes)?;
    std::fs::rename(tmp, path)
}
