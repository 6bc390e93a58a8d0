//! HTTP routes.

use std::collections::BTreeMap;
use std::net::SocketAddr;
use std::path::Path;
use std::sync::Arc;
use std::time::{SystemTime, UNIX_EPOCH};

use axum::extract::{Path as UrlPath, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use ils_core::model::{LesionType, Polarity};
use ils_core::{io, RasterMask};
use serde::{Deserialize, Serialize};

use crate::assign::{assign_samples, Worklists};
use crate::export::{export_filtered, Export};
use crate::samples::Sample;
use crate::store::{Decision, Verdict, VerdictStore};
use crate::ReviewError;

/// Everything the service holds in memory.
#[derive(Debug)]
pub struct ReviewState {
    samples: BTreeMap<String, Sample>,
    worklists: Worklists,
    store: VerdictStore,
}

impl ReviewState {
    pub fn new(samples: Vec<Sample>, experts: &[String], seed: u64, log: &Path) -> Result<Self, ReviewError> {
        let worklists = assign_samples(&samples, experts, seed)?;
        let store = VerdictStore::open(log)?;
        let samples = samples.into_iter().map(|s| (s.sample_id.clone(), s)).collect();
        Ok(Self {
            samples,
            worklists,
            store,
        })
    }

    pub fn worklists(&self) -> &Worklists {
        &self.worklists
    }

    pub fn export(&self) -> Export {
        let samples: Vec<Sample> = self.samples.values().cloned().collect();
        export_filtered(&samples, &self.worklists, &self.store.snapshot())
    }

    fn assigned(&self, expert: &str, sample: &str) -> bool {
        self.worklists
            .get(expert)
            .is_some_and(|l| l.iter().any(|s| s == sample))
    }
}

struct ApiError(StatusCode, String);

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        #[derive(Serialize)]
        struct Body {
            error: String,
        }
        (self.0, Json(Body { error: self.1 })).into_response()
    }
}

fn not_found(what: &str, id: &str) -> ApiError {
    ApiError(StatusCode::NOT_FOUND, format!("unknown {what} `{id}`"))
}

#[derive(Deserialize)]
struct ExpertQuery {
    expert: String,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq)]
pub struct WorklistItem {
    pub sample_id: String,
    pub lesion: LesionType,
    pub polarity: Polarity,
    /// The requesting expert's own decision, if any.
    pub decision: Option<Decision>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq)]
pub struct WorklistResponse {
    pub expert: String,
    pub items: Vec<WorklistItem>,
}

async fn worklist(
    State(st): State<Arc<ReviewState>>,
    Query(q): Query<ExpertQuery>,
) -> Result<Json<WorklistResponse>, ApiError> {
    let ids = st.worklists.get(&q.expert).ok_or_else(|| not_found("expert", &q.expert))?;
    let verdicts = st.store.snapshot();
    let items = ids
        .iter()
        .map(|id| {
            let s = &st.samples[id];
            WorklistItem {
                sample_id: id.clone(),
                lesion: s.lesion,
                polarity: s.polarity,
                decision: verdicts.get(&(q.expert.clone(), id.clone())).map(|v| v.decision),
            }
        })
        .collect();
    Ok(Json(WorklistResponse { expert: q.expert, items }))
}

async fn sample(State(st): State<Arc<ReviewState>>, UrlPath(id): UrlPath<String>) -> Result<Json<Sample>, ApiError> {
    st.samples
        .get(&id)
        .cloned()
        .map(Json)
        .ok_or_else(|| not_found("sample", &id))
}

fn render(sample: &Sample) -> Result<Vec<u8>, String> {
    let image = io::read_image(&sample.image_path).map_err(|e| e.to_string())?;
    let mask = match &sample.mask_path {
        Some(p) => io::read_mask(p).map_err(|e| e.to_string())?,
        None => RasterMask::new(image.width(), image.height()),
    };
    ils_core::overlay::overlay_png(&image, &mask).map_err(|e| e.to_string())
}

async fn overlay(State(st): State<Arc<ReviewState>>, UrlPath(id): UrlPath<String>) -> Result<Response, ApiError> {
    let s = st.samples.get(&id).cloned().ok_or_else(|| not_found("sample", &id))?;
    let png = tokio::task::spawn_blocking(move || render(&s))
        .await
        .map_err(|e| ApiError(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?
        .map_err(|e| ApiError(StatusCode::INTERNAL_SERVER_ERROR, e))?;
    Ok(([(header::CONTENT_TYPE, "image/png")], png).into_response())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VerdictRequest {
    pub expert: String,
    pub sample: String,
    pub decision: Decision,
}

async fn verdict(State(st): State<Arc<ReviewState>>, Json(req): Json<VerdictRequest>) -> Result<StatusCode, ApiError> {
    if !st.samples.contains_key(&req.sample) {
        return Err(not_found("sample", &req.sample));
    }
    if !st.assigned(&req.expert, &req.sample) {
        return Err(ApiError(
            StatusCode::FORBIDDEN,
            format!("sample `{}` is not in the worklist of `{}`", req.sample, req.expert),
        ));
    }
    let timestamp = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0, |d| d.as_millis() as u64);
    let v = Verdict {
        expert_id: req.expert,
        sample_id: req.sample,
        decision: req.decision,
        timestamp,
    };
    let st2 = Arc::clone(&st);
    tokio::task::spawn_blocking(move || st2.store.record(v))
        .await
        .map_err(|e| ApiError(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?
        .map_err(|e| ApiError(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?;
    Ok(StatusCode::NO_CONTENT)
}

async fn export(State(st): State<Arc<ReviewState>>) -> Json<Export> {
    Json(st.export())
}

pub fn router(state: Arc<ReviewState>) -> Router {
    Router::new()
        .route("/api/worklist", get(worklist))
        .route("/api/sample/{id}", get(sample))
        .route("/api/sample/{id}/overlay.png", get(overlay))
        .route("/api/verdict", post(verdict))
        .route("/api/export", get(export))
        .with_state(state)
}

/// Serves until the process receives Ctrl-C.
pub async fn serve(state: Arc<ReviewState>, addr: SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
