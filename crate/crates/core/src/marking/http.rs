//! HTTP/JSON interface under `/api/v1`. The calling subject is named by the
//! `X-Subject-Id` header.

use std::net::SocketAddr;
use std::sync::Arc;

use axum::extract::{Path, Query, State};
use axum::http::{header, HeaderMap, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::{Json, Router};
use serde::Deserialize;
use serde_json::json;

use super::{MarkingService, ReviewRequest, ServiceError, TemplateForm};
use crate::dataset::ImageRef;

pub const SUBJECT_HEADER: &str = "x-subject-id";

type Shared = Arc<MarkingService>;

pub struct ApiError(ServiceError);

impl From<ServiceError> for ApiError {
    fn from(e: ServiceError) -> Self {
        ApiError(e)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let (status, code) = match &self.0 {
            ServiceError::UnknownDatabase(_) | ServiceError::NotFound(_) => (StatusCode::NOT_FOUND, "not-found"),
            ServiceError::UnknownSubject(_) => (StatusCode::UNAUTHORIZED, "unknown-subject"),
            ServiceError::NotAssigned { .. } => (StatusCode::FORBIDDEN, "not-assigned"),
            ServiceError::SelfReview { .. } => (StatusCode::FORBIDDEN, "self-review"),
            ServiceError::ViewingBlocked { .. } => (StatusCode::FORBIDDEN, "viewing-blocked"),
            ServiceError::InvalidState { .. } => (StatusCode::CONFLICT, "invalid-state"),
            ServiceError::RevisionConflict { .. } => (StatusCode::CONFLICT, "revision-conflict"),
            ServiceError::Invalid(_) => (StatusCode::UNPROCESSABLE_ENTITY, "invalid-template"),
            ServiceError::BadInput(_) | ServiceError::Schedule(_) => (StatusCode::BAD_REQUEST, "bad-request"),
            ServiceError::Render(super::RenderError::BadHeight(_)) => (StatusCode::BAD_REQUEST, "bad-request"),
            ServiceError::Render(_) => (StatusCode::INTERNAL_SERVER_ERROR, "unreadable-image"),
            ServiceError::Config(_) | ServiceError::Storage(_) => (StatusCode::INTERNAL_SERVER_ERROR, "storage"),
        };
        let mut body = json!({ "error": code, "message": self.0.to_string() });
        if let ServiceError::Invalid(v) = &self.0 {
            body["violations"] = json!(v);
        }
        (status, Json(body)).into_response()
    }
}

fn bad_request(msg: impl Into<String>) -> ApiError {
    ApiError(ServiceError::BadInput(msg.into()))
}

fn subject(headers: &HeaderMap) -> Result<u16, ApiError> {
    headers
        .get(SUBJECT_HEADER)
        .and_then(|v| v.to_str().ok())
        .and_then(|v| v.trim().parse().ok())
        .ok_or(ApiError(ServiceError::UnknownSubject(0)))
}

fn image_ref(db: String, finger: &str, impression: &str) -> Result<ImageRef, ApiError> {
    let finger = finger.parse().map_err(|_| bad_request(format!("finger `{finger}` is not a number")))?;
    let impression =
        impression.parse().map_err(|_| bad_request(format!("impression `{impression}` is not a number")))?;
    Ok(ImageRef::new(db, finger, impression))
}

/// Run a blocking service call off the async executor.
async fn blocking<T: Send + 'static>(
    svc: &Shared,
    f: impl FnOnce(&MarkingService) -> Result<T, ServiceError> + Send + 'static,
) -> Result<T, ApiError> {
    let svc = svc.clone();
    tokio::task::spawn_blocking(move || f(&svc))
        .await
        .map_err(|e| ApiError(ServiceError::Storage(e.to_string())))?
        .map_err(ApiError)
}

pub fn router(service: Shared) -> Router {
    Router::new()
        .route("/api/v1/schedule/{subject}", get(get_schedule))
        .route("/api/v1/images/{db}/{finger}/{file}", get(get_image))
        .route("/api/v1/templates/{db}/{finger}/{impression}", get(get_template).put(put_template))
        .route("/api/v1/templates/{db}/{finger}/{impression}/history", get(get_history))
        .route("/api/v1/templates/{db}/{finger}/{impression}/reviews", axum::routing::post(post_review))
        .route("/api/v1/export/{file}", get(get_export))
        .route("/api/v1/stats/{db}", get(get_stats))
        .with_state(service)
}

/// Bind the configured address and serve until the process is stopped.
pub async fn serve(service: Shared) -> std::io::Result<()> {
    let cfg = service.config();
    let addr: SocketAddr = format!("{}:{}", cfg.bind, cfg.port)
        .parse()
        .map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidInput, format!("{e}")))?;
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(service)).await
}

async fn get_schedule(State(svc): State<Shared>, Path(subject): Path<u16>) -> Result<Response, ApiError> {
    let s = blocking(&svc, move |svc| svc.schedule_for(subject)).await?;
    Ok(Json(s).into_response())
}

#[derive(Deserialize)]
struct ImageQuery {
    height_cm: Option<f64>,
}

async fn get_image(
    State(svc): State<Shared>,
    Path((db, finger, file)): Path<(String, String, String)>,
    Query(q): Query<ImageQuery>,
    headers: HeaderMap,
) -> Result<Response, ApiError> {
    let who = subject(&headers)?;
    let impression = file.strip_suffix(".png").ok_or_else(|| bad_request("images are served as .png"))?;
    let image = image_ref(db, &finger, impression)?;
    let height = q.height_cm.unwrap_or(svc.config().display_height_cm);
    let r = blocking(&svc, move |svc| svc.view_image(who, &image, height)).await?;
    let m = &r.metadata;
    let mut resp = r.png.into_response();
    let h = resp.headers_mut();
    h.insert(header::CONTENT_TYPE, HeaderValue::from_static("image/png"));
    for (name, value) in [
        ("x-px-per-cm", m.px_per_cm.to_string()),
        ("x-image-width-px", m.width_px.to_string()),
        ("x-image-height-px", m.height_px.to_string()),
        ("x-target-height-cm", m.target_cm.to_string()),
    ] {
        h.insert(name, HeaderValue::from_str(&value).expect("numeric header"));
    }
    Ok(resp)
}

async fn get_template(
    State(svc): State<Shared>,
    Path((db, finger, impression)): Path<(String, String, String)>,
) -> Result<Response, ApiError> {
    let image = image_ref(db, &finger, &impression)?;
    let state = blocking(&svc, move |svc| {
        let s = svc.template(&image)?;
        s.ok_or(ServiceError::NotFound(image))
    })
    .await?;
    let form = TemplateForm::from_record(&state.record, state.perceived_quality);
    Ok(Json(json!({
        "image": state.image,
        "revision": state.revision,
        "marker": state.marker,
        "status": state.status,
        "perceived_quality": state.perceived_quality,
        "minutiae": form.minutiae,
        "singular_points": form.singular_points,
        "reviews": state.reviews,
        "fingerprint_type": state.fingerprint_type,
        "completeness": state.completeness,
        "updated_at": state.updated_at,
    }))
    .into_response())
}

async fn put_template(
    State(svc): State<Shared>,
    Path((db, finger, impression)): Path<(String, String, String)>,
    headers: HeaderMap,
    Json(form): Json<TemplateForm>,
) -> Result<Response, ApiError> {
    let who = subject(&headers)?;
    let image = image_ref(db, &finger, &impression)?;
    let s = blocking(&svc, move |svc| svc.submit_template(who, &image, &form)).await?;
    Ok(Json(json!({
        "revision": s.state.revision,
        "status": s.state.status,
        "warnings": s.warnings,
    }))
    .into_response())
}

async fn get_history(
    State(svc): State<Shared>,
    Path((db, finger, impression)): Path<(String, String, String)>,
) -> Result<Response, ApiError> {
    let image = image_ref(db, &finger, &impression)?;
    let h = blocking(&svc, move |svc| svc.history(&image)).await?;
    Ok(Json(h).into_response())
}

async fn post_review(
    State(svc): State<Shared>,
    Path((db, finger, impression)): Path<(String, String, String)>,
    headers: HeaderMap,
    Json(req): Json<ReviewRequest>,
) -> Result<Response, ApiError> {
    let who = subject(&headers)?;
    let image = image_ref(db, &finger, &impression)?;
    let s = blocking(&svc, move |svc| svc.submit_review(who, &image, &req)).await?;
    Ok(Json(json!({ "revision": s.revision, "status": s.status })).into_response())
}

async fn get_export(State(svc): State<Shared>, Path(file): Path<String>) -> Result<Response, ApiError> {
    let db = file.strip_suffix(".zip").ok_or_else(|| bad_request("exports are served as .zip"))?.to_string();
    let archive = blocking(&svc, move |svc| svc.export_database(&db)).await?;
    let mut resp = archive.zip.into_response();
    let h = resp.headers_mut();
    h.insert(header::CONTENT_TYPE, HeaderValue::from_static("application/zip"));
    h.insert(
        "x-completeness",
        HeaderValue::from_str(&archive.summary.completeness.to_string()).expect("numeric header"),
    );
    Ok(resp)
}

async fn get_stats(State(svc): State<Shared>, Path(db): Path<String>) -> Result<Response, ApiError> {
    let s = blocking(&svc, move |svc| svc.stats(&db)).await?;
    Ok(Json(s).into_response())
}
