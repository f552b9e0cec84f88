use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use serde_json::json;
use stepwise_core::document::DocumentError;
use stepwise_core::pipeline::PipelineError;
use stepwise_core::shots::{FrameError, ShotError};
use stepwise_core::transcript::TranscriptError;
use thiserror::Error;

use crate::settings::SettingsError;

#[derive(Debug, Error)]
pub enum ApiError {
    #[error("project {0} not found")]
    ProjectNotFound(String),
    #[error("stage {0} not found; stages are numbered 1 to 5")]
    StageNotFound(usize),
    #[error("{0}")]
    BadRequest(String),
    #[error(transparent)]
    Transcript(#[from] TranscriptError),
    #[error(transparent)]
    Document(#[from] DocumentError),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error("frames unavailable: {0}")]
    Frames(#[from] FrameError),
    #[error(transparent)]
    Shots(#[from] ShotError),
    #[error(transparent)]
    Settings(#[from] SettingsError),
    #[error("internal error: {0}")]
    Internal(String),
}

impl ApiError {
    /// HTTP status and machine-readable error kind.
    pub fn classify(&self) -> (StatusCode, &'static str) {
        match self {
            ApiError::ProjectNotFound(_) => (StatusCode::NOT_FOUND, "ProjectNotFound"),
            ApiError::StageNotFound(_) => (StatusCode::NOT_FOUND, "StageNotFound"),
            ApiError::BadRequest(_) => (StatusCode::BAD_REQUEST, "BadRequest"),
            ApiError::Transcript(_) => (StatusCode::BAD_REQUEST, "UnparsableTranscript"),
            ApiError::Document(e) => match e {
                DocumentError::StaleRevision { .. } => (StatusCode::CONFLICT, "StaleRevision"),
                DocumentError::OverlapRejected { .. } => (StatusCode::UNPROCESSABLE_ENTITY, "OverlapRejected"),
                DocumentError::CycleDetected(_) => (StatusCode::UNPROCESSABLE_ENTITY, "CycleDetected"),
                DocumentError::UnknownTarget(_) => (StatusCode::NOT_FOUND, "UnknownTarget"),
                DocumentError::InvalidEdit(_) => (StatusCode::UNPROCESSABLE_ENTITY, "InvalidEdit"),
                DocumentError::SchemaVersionMismatch { .. } | DocumentError::CorruptDocument(_) => {
                    (StatusCode::INTERNAL_SERVER_ERROR, "CorruptDocument")
                }
            },
            ApiError::Pipeline(e) => match e {
                PipelineError::UnknownStage(_) => (StatusCode::NOT_FOUND, "StageNotFound"),
                PipelineError::MissingPrerequisiteStage { .. } => (StatusCode::CONFLICT, "MissingPrerequisiteStage"),
                PipelineError::Extraction { .. } | PipelineError::Localization(_) => {
                    (StatusCode::BAD_GATEWAY, "ProviderFailure")
                }
                PipelineError::Shots(_) => (StatusCode::UNPROCESSABLE_ENTITY, "ShotError"),
                PipelineError::Document(_) => (StatusCode::INTERNAL_SERVER_ERROR, "CorruptDocument"),
            },
            ApiError::Frames(_) => (StatusCode::UNPROCESSABLE_ENTITY, "FramesUnavailable"),
            ApiError::Shots(_) => (StatusCode::UNPROCESSABLE_ENTITY, "ShotError"),
            ApiError::Settings(_) => (StatusCode::INTERNAL_SERVER_ERROR, "Misconfigured"),
            ApiError::Internal(_) => (StatusCode::INTERNAL_SERVER_ERROR, "Internal"),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let (status, kind) = self.classify();
        if status.is_server_error() {
            tracing::error!(error = %self, kind, "request failed");
        }
        (status, Json(json!({ "error": kind, "message": self.to_string() }))).into_response()
    }
}
