//! HTTP API over an annotation catalog directory.
//!
//! Reads take a shared lock on the store; mutations take the exclusive lock,
//! so event-log appends are serialized and never interleave. Every mutation
//! response carries the new snapshot version.

use std::net::SocketAddr;
use std::path::{Component, Path as FsPath, PathBuf};
use std::sync::{Arc, RwLock};

use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use chrono::Utc;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::catalog::{normalize, AnnotationRecord, AnnotationStore, Stage, Target, Verdict};
use crate::error::Error;
use crate::pose::TargetMorph;

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    pub catalog_dir: PathBuf,
    pub addr: SocketAddr,
    pub min_models: usize,
    /// Recorded on events whose request names no annotator.
    pub annotator: String,
}

pub struct AppState {
    store: RwLock<AnnotationStore>,
    dir: PathBuf,
    annotator: String,
}

impl AppState {
    pub fn open(cfg: &ServiceConfig) -> crate::Result<Self> {
        if !cfg.catalog_dir.is_dir() {
            return Err(Error::NotFound(format!("catalog directory {}", cfg.catalog_dir.display())));
        }
        Ok(Self {
            store: RwLock::new(AnnotationStore::open(&cfg.catalog_dir, cfg.min_models)?),
            dir: cfg.catalog_dir.clone(),
            annotator: cfg.annotator.clone(),
        })
    }

    pub fn store(&self) -> std::sync::RwLockReadGuard<'_, AnnotationStore> {
        self.store.read().expect("store lock poisoned")
    }
}

struct ApiError(Error);

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        ApiError(e)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = match &self.0 {
            Error::Invalid(_) | Error::NonFinite { .. } => StatusCode::UNPROCESSABLE_ENTITY,
            Error::NotFound(_) => StatusCode::NOT_FOUND,
            Error::Conflict(_) => StatusCode::CONFLICT,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        (status, Json(json!({ "reason": self.0.reason(), "message": self.0.to_string() }))).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/stats", get(stats))
        .route("/groups", get(groups))
        .route("/groups/{name}/samples", get(samples))
        .route("/groups/{name}/annotate", post(annotate))
        .route("/models/{id}/morphs", get(model_morphs))
        .route("/inspect", post(inspect))
        .route("/snapshot", get(snapshot))
        .route("/images/{*path}", get(image))
        .with_state(state)
}

async fn stats(State(st): State<Arc<AppState>>) -> Json<crate::catalog::CatalogStats> {
    Json(st.store().stats())
}

#[derive(Debug, Deserialize)]
struct GroupQuery {
    min_count: Option<usize>,
}

#[derive(Debug, Serialize)]
struct GroupSummary {
    name: String,
    count: usize,
    filtered: bool,
    group_annotated: usize,
    inspected: usize,
    target: Option<Target>,
}

async fn groups(State(st): State<Arc<AppState>>, Query(q): Query<GroupQuery>) -> Json<serde_json::Value> {
    let store = st.store();
    let min = q.min_count.unwrap_or(0);
    let rows: Vec<GroupSummary> = store
        .group_candidates()
        .into_iter()
        .filter(|g| g.count >= min)
        .map(|g| {
            let recs: Vec<&AnnotationRecord> = store.records().filter(|r| r.name == g.name).collect();
            let pending = recs.iter().filter(|r| r.stage == Stage::GroupAnnotated);
            GroupSummary {
                target: pending.clone().map(|r| r.target).next(),
                group_annotated: pending.count(),
                inspected: recs.iter().filter(|r| r.is_final()).count(),
                name: g.name,
                count: g.count,
                filtered: g.filtered,
            }
        })
        .collect();
    Json(json!({ "version": store.version(), "threshold": store.min_models(), "groups": rows }))
}

fn image_url(p: &FsPath) -> String {
    format!("/{}", p.display())
}

async fn samples(State(st): State<Arc<AppState>>, Path(name): Path<String>) -> ApiResult<Json<serde_json::Value>> {
    let store = st.store();
    let name = normalize(&name);
    let models = store.catalog().models_with(&name);
    if models.is_empty() {
        return Err(Error::NotFound(format!("morph name {name:?}")).into());
    }
    let samples: Vec<serde_json::Value> = models
        .iter()
        .map(|id| {
            let entry = &store.catalog().models[*id];
            let rec = store.record(id, &name);
            json!({
                "model_id": id,
                "neutral": entry.neutral_image.as_deref().map(image_url),
                "morph": image_url(&entry.morphs[&name].preview_image),
                "target": rec.map(|r| r.target),
                "stage": rec.map(|r| r.stage),
            })
        })
        .collect();
    Ok(Json(json!({ "version": store.version(), "name": name, "samples": samples })))
}

#[derive(Debug, Deserialize)]
struct AnnotateBody {
    target: u8,
    annotator: Option<String>,
}

async fn annotate(
    State(st): State<Arc<AppState>>,
    Path(name): Path<String>,
    Json(body): Json<AnnotateBody>,
) -> ApiResult<Json<serde_json::Value>> {
    let target = TargetMorph::from_id(body.target)?;
    let annotator = body.annotator.unwrap_or_else(|| st.annotator.clone());
    let mut store = st.store.write().expect("store lock poisoned");
    let created = store.annotate_group(&name, target, &annotator, Utc::now())?;
    Ok(Json(json!({ "created": created.len(), "version": store.version() })))
}

async fn model_morphs(State(st): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<Json<serde_json::Value>> {
    let store = st.store();
    let entry = store.catalog().models.get(&id).ok_or_else(|| Error::NotFound(format!("model {id:?}")))?;
    let morphs: Vec<serde_json::Value> = entry
        .morphs
        .values()
        .map(|m| {
            let rec = store.record(&id, &m.name);
            json!({
                "name": m.name,
                "preview": image_url(&m.preview_image),
                "target": rec.map(|r| r.target),
                "stage": rec.map(|r| r.stage),
            })
        })
        .collect();
    let available: Vec<u8> = store.accepted_targets(&id)?.into_iter().map(TargetMorph::id).collect();
    Ok(Json(json!({
        "version": store.version(),
        "model_id": id,
        "neutral": entry.neutral_image.as_deref().map(image_url),
        "morphs": morphs,
        "available": available,
    })))
}

#[derive(Debug, Deserialize)]
struct InspectBody {
    model_id: String,
    name: String,
    verdict: Verdict,
    annotator: Option<String>,
}

async fn inspect(State(st): State<Arc<AppState>>, Json(body): Json<InspectBody>) -> ApiResult<Json<serde_json::Value>> {
    let annotator = body.annotator.unwrap_or_else(|| st.annotator.clone());
    let mut store = st.store.write().expect("store lock poisoned");
    let rec = store.inspect(&body.model_id, &body.name, body.verdict, &annotator, Utc::now())?;
    Ok(Json(json!({ "record": rec, "version": store.version() })))
}

#[derive(Debug, Deserialize)]
struct SnapshotQuery {
    format: Option<String>,
}

async fn snapshot(State(st): State<Arc<AppState>>, Query(q): Query<SnapshotQuery>) -> ApiResult<Response> {
    let store = st.store();
    match q.format.as_deref() {
        None | Some("json") => {
            let records: Vec<&AnnotationRecord> = store.records().collect();
            Ok(Json(json!({
                "version": store.version(),
                "records": records,
                "mapping_table": store.mapping_table(),
            }))
            .into_response())
        }
        Some("tsv") => {
            Ok(([(header::CONTENT_TYPE, "text/tab-separated-values; charset=utf-8")], store.snapshot_table())
                .into_response())
        }
        Some(other) => Err(Error::invalid(format!("unknown snapshot format {other:?}")).into()),
    }
}

/// Resolves a request path under `images/`, refusing anything that could
/// escape the directory.
fn image_path(dir: &FsPath, rel: &str) -> Option<PathBuf> {
    let rel = FsPath::new(rel);
    if rel.components().all(|c| matches!(c, Component::Normal(_))) {
        Some(dir.join("images").join(rel))
    } else {
        None
    }
}

async fn image(State(st): State<Arc<AppState>>, Path(rel): Path<String>) -> ApiResult<Response> {
    let path = image_path(&st.dir, &rel).ok_or_else(|| Error::NotFound(format!("image {rel:?}")))?;
    match tokio::fs::read(&path).await {
        Ok(bytes) => Ok(([(header::CONTENT_TYPE, "image/png")], bytes).into_response()),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Err(Error::NotFound(format!("image {rel:?}")).into()),
        Err(e) => Err(Error::io(path, e).into()),
    }
}

/// A bound, not yet running service.
pub struct Bound {
    pub listener: tokio::net::TcpListener,
    pub state: Arc<AppState>,
}

impl Bound {
    pub fn local_addr(&self) -> std::io::Result<SocketAddr> {
        self.listener.local_addr()
    }

    /// Serves until `shutdown` resolves; in-flight requests finish first.
    pub async fn run(self, shutdown: impl std::future::Future<Output = ()> + Send + 'static) -> crate::Result<()> {
        let addr = self.local_addr().ok();
        axum::serve(self.listener, router(self.state))
            .with_graceful_shutdown(shutdown)
            .await
            .map_err(|e| Error::io(addr.map(|a| a.to_string()).unwrap_or_default(), e))
    }
}

pub async fn bind(cfg: &ServiceConfig) -> crate::Result<Bound> {
    let state = Arc::new(AppState::open(cfg)?);
    let listener = tokio::net::TcpListener::bind(cfg.addr).await.map_err(|e| Error::io(cfg.addr.to_string(), e))?;
    Ok(Bound { listener, state })
}
