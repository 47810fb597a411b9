//! HTTP session API over the labeling engine.
//!
//! Routes:
//! - `POST /sessions` builds a workload and an engine, returns the session id.
//! - `GET /sessions/{id}/batch` issues the next batch of pairs to label.
//! - `POST /sessions/{id}/labels` answers the pending batch.
//! - `GET /sessions/{id}/status` returns the latest snapshot without mutating.
//! - `GET /sessions/{id}/log` returns the run log, one record per answered batch.
//!
//! Errors are JSON `{code, message}` bodies with a matching HTTP status.

mod error;

use std::collections::HashMap;
use std::net::SocketAddr;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, RwLock};

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::routing::{get, post};
use axum::{Json, Router};
use rhumo_core::api::{
    BatchPair, BatchResponse, CreateSessionRequest, CreateSessionResponse, RecordView, StatusSnapshot,
    SubmitLabelsRequest, WorkloadSource,
};
use rhumo_core::ingest::{build_workload, GroundTruth, Workload};
use rhumo_core::selection::StepRecord;
use rhumo_core::{synth, Engine, Request};

pub use error::ServiceError;

type Result<T> = std::result::Result<T, ServiceError>;

struct Session {
    engine: Mutex<Engine>,
    /// Latest snapshot, readable while the engine is busy.
    snapshot: RwLock<StatusSnapshot>,
}

impl Session {
    fn publish(&self, s: StatusSnapshot) {
        *self.snapshot.write().expect("snapshot lock poisoned") = s;
    }

    fn read(&self) -> StatusSnapshot {
        self.snapshot.read().expect("snapshot lock poisoned").clone()
    }
}

#[derive(Clone, Default)]
pub struct AppState {
    sessions: Arc<RwLock<HashMap<String, Arc<Session>>>>,
    next_id: Arc<AtomicU64>,
}

impl AppState {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn session_count(&self) -> usize {
        self.sessions.read().expect("session map poisoned").len()
    }

    fn get(&self, id: &str) -> Result<Arc<Session>> {
        self.sessions
            .read()
            .expect("session map poisoned")
            .get(id)
            .cloned()
            .ok_or_else(|| ServiceError::UnknownSession(id.to_string()))
    }
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/sessions", post(create_session))
        .route("/sessions/{id}/batch", get(next_batch))
        .route("/sessions/{id}/labels", post(submit_labels))
        .route("/sessions/{id}/status", get(status))
        .route("/sessions/{id}/log", get(run_log))
        .with_state(state)
}

/// Serves until ctrl-c. Returns the bound address through `on_bound` so
/// callers can bind port 0.
pub async fn serve(addr: SocketAddr, on_bound: impl FnOnce(SocketAddr)) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    let local = listener.local_addr()?;
    tracing::info!(%local, "listening");
    on_bound(local);
    axum::serve(listener, router(AppState::new()))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}

fn load(source: &WorkloadSource) -> rhumo_core::Result<(Workload, GroundTruth)> {
    match source {
        WorkloadSource::Dataset { spec } => {
            spec.validate()?;
            build_workload(spec)
        }
        WorkloadSource::Synthetic { spec } => synth::build(spec),
    }
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> Result<T> + Send + 'static) -> Result<T> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ServiceError::Internal(e.to_string()))?
}

async fn create_session(
    State(state): State<AppState>,
    body: std::result::Result<Json<CreateSessionRequest>, JsonRejection>,
) -> Result<(StatusCode, Json<CreateSessionResponse>)> {
    let Json(req) = body.map_err(|e| ServiceError::BadRequest(e.body_text()))?;
    let engine = blocking(move || {
        let (workload, truth) = load(&req.source)?;
        let truth = req.config.ground_truth_proportions.then_some(truth.equivalent.as_slice());
        Ok(Engine::new(Arc::new(workload), req.requirement, req.config.clone(), truth)?)
    })
    .await?;
    let snapshot = engine.snapshot();
    let id = format!("s{}", state.next_id.fetch_add(1, Ordering::Relaxed) + 1);
    let session = Arc::new(Session {
        engine: Mutex::new(engine),
        snapshot: RwLock::new(snapshot.clone()),
    });
    state
        .sessions
        .write()
        .expect("session map poisoned")
        .insert(id.clone(), session);
    tracing::info!(session = %id, "created");
    Ok((
        StatusCode::CREATED,
        Json(CreateSessionResponse {
            session_id: id,
            status: snapshot,
        }),
    ))
}

fn render(workload: &Workload, pair_id: u64) -> Result<BatchPair> {
    let i = workload
        .pairs
        .binary_search_by_key(&pair_id, |p| p.pair_id)
        .map_err(|_| ServiceError::Internal(format!("issued pair {pair_id} is not in the workload")))?;
    let p = &workload.pairs[i];
    let view = |r: &rhumo_core::datamodel::RecordEntity| RecordView {
        id: r.id.clone(),
        attributes: r.attributes.clone(),
    };
    Ok(BatchPair {
        pair_id,
        metric: p.metric,
        left: view(workload.left_record(p.left)),
        right: view(workload.right_record(p.right)),
    })
}

async fn next_batch(State(state): State<AppState>, Path(id): Path<String>) -> Result<Json<BatchResponse>> {
    let session = state.get(&id)?;
    let resp = blocking(move || {
        let mut engine = session.engine.lock().expect("engine lock poisoned");
        let request = engine.next_request()?;
        let status = engine.snapshot();
        session.publish(status.clone());
        let pairs = match request {
            Request::Done => Vec::new(),
            Request::Batch(ids) => ids
                .into_iter()
                .map(|p| render(engine.workload(), p))
                .collect::<Result<_>>()?,
        };
        Ok(BatchResponse {
            done: status.done,
            pairs,
            status,
        })
    })
    .await?;
    Ok(Json(resp))
}

async fn submit_labels(
    State(state): State<AppState>,
    Path(id): Path<String>,
    body: std::result::Result<Json<SubmitLabelsRequest>, JsonRejection>,
) -> Result<Json<StatusSnapshot>> {
    let session = state.get(&id)?;
    let Json(req) = body.map_err(|e| ServiceError::BadRequest(e.body_text()))?;
    let labels: Vec<(u64, bool)> = req.labels.iter().map(|l| (l.pair_id, l.matching)).collect();
    let status = blocking(move || {
        let mut engine = session.engine.lock().expect("engine lock poisoned");
        let status = engine.submit(&labels)?;
        session.publish(status.clone());
        Ok(status)
    })
    .await?;
    Ok(Json(status))
}

async fn status(State(state): State<AppState>, Path(id): Path<String>) -> Result<Json<StatusSnapshot>> {
    Ok(Json(state.get(&id)?.read()))
}

async fn run_log(State(state): State<AppState>, Path(id): Path<String>) -> Result<Json<Vec<StepRecord>>> {
    let session = state.get(&id)?;
    let log = session.engine.lock().expect("engine lock poisoned").log().to_vec();
    Ok(Json(log))
}
