//! JSON-over-HTTP judging service.
//!
//! Sessions are held in memory as immutable snapshots; every judgment is
//! checked against the current snapshot, appended to the log under the
//! session's lock, and only then published as a new snapshot.

use std::collections::HashMap;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};
use std::time::{SystemTime, UNIX_EPOCH};

use axum::body::Body;
use axum::extract::{Path as UrlPath, Query, Request, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use singassess_core::htpr::{htpr_score, HtprSession, Judgment, Position, TierAssignment};
use tower_http::services::ServeFile;

use crate::error::{Error, Result};
use crate::session::{next_payload, token_map, NextPayload, SessionStore};

#[derive(Debug, Clone, Deserialize)]
pub struct CreateRequest {
    #[serde(default)]
    pub tier_path: Option<PathBuf>,
    #[serde(default)]
    pub tiers: Option<TierAssignment>,
    #[serde(default)]
    pub n_triplets: Option<usize>,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CreateResponse {
    pub session_id: String,
    pub total: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JudgmentRequest {
    pub evaluator_id: String,
    pub triplet_id: String,
    pub consistent: bool,
    #[serde(default)]
    pub perceived_order: Option<[Position; 3]>,
}

/// Score as served; `score` and `ci95` are null before the first judgment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreBody {
    pub session_id: String,
    pub score: Option<f64>,
    pub ci95: Option<(f64, f64)>,
    pub judged: usize,
    pub total: usize,
}

pub fn score_body(s: &HtprSession) -> ScoreBody {
    let score = htpr_score(s).ok();
    ScoreBody {
        session_id: s.id.clone(),
        score: score.map(|x| x.score),
        ci95: score.map(|x| x.ci95),
        judged: s.judgments.len(),
        total: s.triplets.len(),
    }
}

struct Slot {
    snapshot: Mutex<Arc<HtprSession>>,
    /// Held across check, append, and publish.
    writer: Mutex<()>,
}

impl Slot {
    fn snapshot(&self) -> Arc<HtprSession> {
        self.snapshot.lock().expect("snapshot lock").clone()
    }
}

#[derive(Debug)]
pub enum ServiceError {
    NotFound(String),
    Conflict(String),
    Unprocessable(String),
    BadRequest(String),
    Internal(String),
}

impl ServiceError {
    fn status(&self) -> StatusCode {
        match self {
            ServiceError::NotFound(_) => StatusCode::NOT_FOUND,
            ServiceError::Conflict(_) => StatusCode::CONFLICT,
            ServiceError::Unprocessable(_) => StatusCode::UNPROCESSABLE_ENTITY,
            ServiceError::BadRequest(_) => StatusCode::BAD_REQUEST,
            ServiceError::Internal(_) => StatusCode::INTERNAL_SERVER_ERROR,
        }
    }
}

impl From<Error> for ServiceError {
    fn from(e: Error) -> Self {
        use singassess_core::Error as C;
        match e {
            Error::UnknownSession(_) => ServiceError::NotFound(e.to_string()),
            Error::Contract(C::UnknownTriplet(_)) => ServiceError::NotFound(e.to_string()),
            Error::Contract(C::DuplicateJudgment { .. }) => ServiceError::Conflict(e.to_string()),
            Error::Contract(_) | Error::Format { .. } => ServiceError::Unprocessable(e.to_string()),
            Error::Usage(_) => ServiceError::BadRequest(e.to_string()),
            other => ServiceError::Internal(other.to_string()),
        }
    }
}

impl IntoResponse for ServiceError {
    fn into_response(self) -> Response {
        let msg = match &self {
            ServiceError::NotFound(m)
            | ServiceError::Conflict(m)
            | ServiceError::Unprocessable(m)
            | ServiceError::BadRequest(m)
            | ServiceError::Internal(m) => m.clone(),
        };
        (self.status(), Json(serde_json::json!({ "error": msg }))).into_response()
    }
}

/// Session state shared by all handlers.
pub struct Service {
    store: SessionStore,
    audio_dir: PathBuf,
    default_triplets: usize,
    sessions: RwLock<HashMap<String, Arc<Slot>>>,
    tokens: RwLock<HashMap<String, String>>,
}

fn now_ms() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_millis() as u64)
}

impl Service {
    /// Loads every stored session, replaying its log.
    pub fn open(store: SessionStore, audio_dir: impl Into<PathBuf>, default_triplets: usize) -> Result<Self> {
        let svc = Self {
            store,
            audio_dir: audio_dir.into(),
            default_triplets,
            sessions: RwLock::new(HashMap::new()),
            tokens: RwLock::new(HashMap::new()),
        };
        for id in svc.store.list()? {
            let s = svc.store.load(&id)?;
            svc.install(s);
        }
        Ok(svc)
    }

    fn install(&self, s: HtprSession) -> Arc<Slot> {
        self.tokens.write().expect("token lock").extend(token_map(&s));
        let id = s.id.clone();
        let slot = Arc::new(Slot { snapshot: Mutex::new(Arc::new(s)), writer: Mutex::new(()) });
        self.sessions.write().expect("session lock").entry(id).or_insert(slot).clone()
    }

    fn slot(&self, id: &str) -> Result<Arc<Slot>> {
        self.sessions.read().expect("session lock").get(id).cloned().ok_or_else(|| Error::UnknownSession(id.into()))
    }

    pub fn create(&self, req: CreateRequest) -> Result<CreateResponse> {
        let tiers = match (req.tiers, req.tier_path) {
            (Some(t), None) => t,
            (None, Some(p)) => crate::io::read_json(&p)?,
            _ => return Err(Error::Usage("give exactly one of `tiers` and `tier_path`".into())),
        };
        let n = req.n_triplets.unwrap_or(self.default_triplets);
        let id = self.store.create(tiers, n, req.seed)?;
        let slot = match self.slot(&id) {
            Ok(s) => s,
            Err(_) => self.install(self.store.load(&id)?),
        };
        Ok(CreateResponse { session_id: id, total: slot.snapshot().triplets.len() })
    }

    pub fn next(&self, id: &str, evaluator: &str) -> Result<NextPayload> {
        Ok(next_payload(&self.slot(id)?.snapshot(), evaluator))
    }

    pub fn score(&self, id: &str) -> Result<ScoreBody> {
        Ok(score_body(&self.slot(id)?.snapshot()))
    }

    pub fn submit(&self, id: &str, req: JudgmentRequest) -> Result<ScoreBody> {
        let slot = self.slot(id)?;
        let _w = slot.writer.lock().expect("writer lock");
        let current = slot.snapshot();
        let j = Judgment {
            triplet_id: req.triplet_id,
            evaluator_id: req.evaluator_id,
            consistent: req.consistent,
            perceived_order: req.perceived_order,
            timestamp: now_ms(),
        };
        current.check(&j)?;
        self.store.append(id, &j)?;
        let mut next = (*current).clone();
        next.judgments.push(j);
        let body = score_body(&next);
        *slot.snapshot.lock().expect("snapshot lock") = Arc::new(next);
        Ok(body)
    }

    pub fn audio_path(&self, token: &str) -> Option<PathBuf> {
        let clip = self.tokens.read().expect("token lock").get(token).cloned()?;
        Some(self.audio_dir.join(format!("{clip}.wav")))
    }
}

type Shared = Arc<Service>;

async fn blocking<T: Send + 'static>(
    f: impl FnOnce() -> Result<T> + Send + 'static,
) -> std::result::Result<T, ServiceError> {
    tokio::task::spawn_blocking(f).await.map_err(|e| ServiceError::Internal(e.to_string()))?.map_err(Into::into)
}

async fn create_session(
    State(svc): State<Shared>,
    Json(req): Json<CreateRequest>,
) -> std::result::Result<Json<CreateResponse>, ServiceError> {
    Ok(Json(blocking(move || svc.create(req)).await?))
}

#[derive(Debug, Deserialize)]
struct NextQuery {
    evaluator: String,
}

async fn next_triplet(
    State(svc): State<Shared>,
    UrlPath(id): UrlPath<String>,
    Query(q): Query<NextQuery>,
) -> std::result::Result<Json<NextPayload>, ServiceError> {
    Ok(Json(svc.next(&id, &q.evaluator)?))
}

async fn submit_judgment(
    State(svc): State<Shared>,
    UrlPath(id): UrlPath<String>,
    Json(req): Json<JudgmentRequest>,
) -> std::result::Result<Json<ScoreBody>, ServiceError> {
    Ok(Json(blocking(move || svc.submit(&id, req)).await?))
}

async fn session_score(
    State(svc): State<Shared>,
    UrlPath(id): UrlPath<String>,
) -> std::result::Result<Json<ScoreBody>, ServiceError> {
    Ok(Json(svc.score(&id)?))
}

async fn audio(State(svc): State<Shared>, UrlPath(token): UrlPath<String>, req: Request) -> Response {
    let Some(path) = svc.audio_path(&token) else {
        return ServiceError::NotFound("unknown audio token".into()).into_response();
    };
    if !path.is_file() {
        return ServiceError::NotFound("audio unavailable".into()).into_response();
    }
    let mime: axum::http::HeaderValue = "audio/wav".parse().expect("static mime");
    match ServeFile::new(&path).try_call(req).await {
        Ok(mut resp) => {
            resp.headers_mut().insert(axum::http::header::CONTENT_TYPE, mime);
            resp.map(Body::new).into_response()
        }
        Err(e) => ServiceError::Internal(e.to_string()).into_response(),
    }
}

pub fn router(svc: Shared) -> Router {
    Router::new()
        .route("/sessions", post(create_session))
        .route("/sessions/{id}/next", get(next_triplet))
        .route("/sessions/{id}/judgments", post(submit_judgment))
        .route("/sessions/{id}/score", get(session_score))
        .route("/audio/{token}", get(audio))
        .with_state(svc)
}

/// Binds `addr`, prints `listening on <addr>` to stdout (and writes the address
/// to `addr_file` when given), and serves until Ctrl-C.
pub fn serve(
    store_root: &Path,
    audio_dir: &Path,
    addr: SocketAddr,
    default_triplets: usize,
    addr_file: Option<&Path>,
) -> Result<()> {
    let svc = Arc::new(Service::open(SessionStore::new(store_root), audio_dir, default_triplets)?);
    let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build().map_err(|e| Error::io(store_root, e))?;
    rt.block_on(async move {
        let listener = tokio::net::TcpListener::bind(addr).await.map_err(|e| Error::io(store_root, e))?;
        let local = listener.local_addr().map_err(|e| Error::io(store_root, e))?;
        if let Some(f) = addr_file {
            std::fs::write(f, local.to_string()).map_err(|e| Error::io(f, e))?;
        }
        println!("listening on {local}");
        use std::io::Write;
        let _ = std::io::stdout().flush();
        axum::serve(listener, router(svc))
            .with_graceful_shutdown(async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await
            .map_err(|e| Error::io(store_root, e))
    })
}
