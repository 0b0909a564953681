//! HTTP routes over [`SurveyService`].

use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use skintone_core::protocol::{ProtocolError, Study};

use crate::service::{CreateSession, SubmitResponse, SurveyError, SurveyService};

/// Error body of every non-2xx response.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
    pub message: String,
}

impl SurveyError {
    pub fn code(&self) -> &'static str {
        match self {
            SurveyError::UnknownSession(_) => "unknown_session",
            SurveyError::Completed(_) => "session_complete",
            SurveyError::UnknownTask(_) => "unknown_task",
            SurveyError::StaleTask { .. } => "stale_task",
            SurveyError::Duplicate(_) => "duplicate",
            SurveyError::OutOfRange { .. } => "out_of_range",
            SurveyError::UnknownImage(_) => "unknown_image",
            SurveyError::BadRequest(_) => "bad_request",
            SurveyError::Protocol(ProtocolError::UnknownStudy(_)) => "unknown_study",
            SurveyError::Protocol(ProtocolError::MissingAssets(_)) => "missing_assets",
            SurveyError::Replay { .. } | SurveyError::Protocol(_) | SurveyError::Io(_) => "internal",
        }
    }

    pub fn status(&self) -> StatusCode {
        match self {
            SurveyError::UnknownSession(_) | SurveyError::UnknownImage(_) => StatusCode::NOT_FOUND,
            SurveyError::Completed(_) | SurveyError::StaleTask { .. } | SurveyError::Duplicate(_) => {
                StatusCode::CONFLICT
            }
            SurveyError::UnknownTask(_)
            | SurveyError::OutOfRange { .. }
            | SurveyError::Protocol(ProtocolError::UnknownStudy(_)) => StatusCode::UNPROCESSABLE_ENTITY,
            SurveyError::BadRequest(_) => StatusCode::BAD_REQUEST,
            SurveyError::Protocol(ProtocolError::MissingAssets(_)) => StatusCode::SERVICE_UNAVAILABLE,
            SurveyError::Replay { .. } | SurveyError::Protocol(_) | SurveyError::Io(_) => {
                StatusCode::INTERNAL_SERVER_ERROR
            }
        }
    }
}

impl IntoResponse for SurveyError {
    fn into_response(self) -> Response {
        let body = ErrorBody { error: self.code().to_string(), message: self.to_string() };
        (self.status(), Json(body)).into_response()
    }
}

fn parse<T: DeserializeOwned>(body: &Bytes) -> Result<T, SurveyError> {
    serde_json::from_slice(body).map_err(|e| SurveyError::BadRequest(e.to_string()))
}

/// Request body of `POST /sessions`; the study stays a plain number until
/// validated so an unknown one gets its own error.
#[derive(Debug, Deserialize)]
struct CreateSessionBody {
    rater_id: String,
    study: u8,
    #[serde(default)]
    seed: Option<u64>,
}

async fn create_session(State(svc): State<Arc<SurveyService>>, body: Bytes) -> Result<impl IntoResponse, SurveyError> {
    let body: CreateSessionBody = parse(&body)?;
    let study = Study::try_from(body.study)?;
    let req = CreateSession { rater_id: body.rater_id, study, seed: body.seed };
    Ok((StatusCode::CREATED, Json(svc.create_session(&req)?)))
}

async fn next_task(
    State(svc): State<Arc<SurveyService>>,
    Path(id): Path<String>,
) -> Result<impl IntoResponse, SurveyError> {
    Ok(Json(svc.next_task(&id)?))
}

async fn submit(
    State(svc): State<Arc<SurveyService>>,
    Path(id): Path<String>,
    body: Bytes,
) -> Result<impl IntoResponse, SurveyError> {
    let req: SubmitResponse = parse(&body)?;
    Ok((StatusCode::CREATED, Json(svc.submit_response(&id, &req)?)))
}

async fn scales(State(svc): State<Arc<SurveyService>>) -> impl IntoResponse {
    Json(svc.scales())
}

async fn image(
    State(svc): State<Arc<SurveyService>>,
    Path(id): Path<String>,
) -> Result<impl IntoResponse, SurveyError> {
    let (bytes, content_type) = svc.image(&id)?;
    Ok(([(header::CONTENT_TYPE, content_type)], bytes))
}

pub fn router(service: Arc<SurveyService>) -> Router {
    Router::new()
        .route("/sessions", post(create_session))
        .route("/sessions/{id}/next", get(next_task))
        .route("/sessions/{id}/responses", post(submit))
        .route("/scales", get(scales))
        .route("/images/{id}", get(image))
        .with_state(service)
}

/// Serves until ctrl-c.
pub async fn serve(listener: tokio::net::TcpListener, service: Arc<SurveyService>) -> std::io::Result<()> {
    axum::serve(listener, router(service))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
