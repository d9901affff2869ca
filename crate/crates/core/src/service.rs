//! Local HTTP server exposing reconciliation sessions to a browser UI.
//!
//! A session is fully determined by its three input snapshots and the list
//! of decisions taken so far; both are persisted, and every state (including
//! after undo) is recomputed by replaying the decisions.

use std::collections::HashMap;
use std::fs;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use axum::extract::{FromRequest, Multipart, Path as UrlPath, Request, State};
use axum::http::{header, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use rand::Rng;
use serde::{Deserialize, Serialize};
use tower_http::cors::{AllowOrigin, CorsLayer};
use tower_http::services::ServeDir;

use crate::algebra::Command;
use crate::canonical::CanonicalSet;
use crate::cli::{CliError, Replicas};
use crate::formats::{render_plan, text_tree, write_atomic, Blobs, Snapshot};
use crate::reconciler::{ConflictKind, Decision, ReconcileError, Resolver, Side, Step};

pub const DEFAULT_BIND: &str = "127.0.0.1:7878";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Resolving,
    Finished,
}

/// One synchronization session.
pub struct Session {
    pub id: String,
    inputs: [Snapshot; 3],
    replicas: Replicas,
    common: CanonicalSet,
    resolver: Resolver,
    decisions: Vec<Decision>,
}

impl Session {
    pub fn start(id: String, original: Snapshot, replica1: Snapshot, replica2: Snapshot) -> Result<Self, ApiError> {
        let replicas = Replicas::from_snapshots(&original, &replica1, &replica2)?;
        let common = replicas.a.intersection(&replicas.b).map_err(ReconcileError::from)?;
        let resolver = fresh_resolver(&replicas, &common)?;
        Ok(Self {
            id,
            inputs: [original, replica1, replica2],
            replicas,
            common,
            resolver,
            decisions: Vec::new(),
        })
    }

    pub fn phase(&self) -> Phase {
        if self.resolver.is_finished() {
            Phase::Finished
        } else {
            Phase::Resolving
        }
    }

    pub fn decisions(&self) -> &[Decision] {
        &self.decisions
    }

    pub fn resolve(&mut self, d: Decision) -> Result<Step, ApiError> {
        let step = self.resolver.resolve(d.conflict, d.winner)?.clone();
        self.decisions.push(d);
        Ok(step)
    }

    /// Drops the last decision and replays the rest. False if there was none.
    pub fn undo(&mut self) -> Result<bool, ApiError> {
        if self.decisions.pop().is_none() {
            return Ok(false);
        }
        self.replay()?;
        Ok(true)
    }

    fn replay(&mut self) -> Result<(), ApiError> {
        let mut r = fresh_resolver(&self.replicas, &self.common)?;
        for d in &self.decisions {
            r.resolve(d.conflict, d.winner)?;
        }
        self.resolver = r;
        Ok(())
    }

    pub fn merger(&self) -> Result<CanonicalSet, ApiError> {
        let rest = self.resolver.merger()?;
        Ok(CanonicalSet::new(self.common.iter().chain(rest.iter()).cloned()).map_err(ReconcileError::from)?)
    }

    pub fn view(&self) -> SessionView {
        let g = self.resolver.graph();
        let column = |side: Side| -> Vec<CommandView> {
            g.side(side)
                .order()
                .iter()
                .map(|c| CommandView {
                    command: c.to_string(),
                    live: self.resolver.is_live(side, c),
                })
                .collect()
        };
        let live: std::collections::BTreeSet<usize> = self.resolver.live_edge_ids().collect();
        SessionView {
            id: self.id.clone(),
            phase: self.phase(),
            common: render(self.common.order().iter()),
            a: column(Side::A),
            b: column(Side::B),
            conflicts: g
                .edges
                .iter()
                .enumerate()
                .map(|(id, e)| ConflictView {
                    id,
                    kind: e.kind,
                    a: e.left.to_string(),
                    b: e.right.to_string(),
                    live: live.contains(&id),
                })
                .collect(),
            live_conflicts: self.resolver.live_conflicts().iter().map(|(i, _)| *i).collect(),
            history: self.resolver.history().iter().map(StepView::from).collect(),
        }
    }

    pub fn plan(&self) -> Result<PlanView, ApiError> {
        if self.phase() == Phase::Resolving {
            return Err(ApiError::unresolved(self));
        }
        let merger = self.merger()?;
        let plan = self.replicas.plan(&merger)?;
        let merged = plan
            .merger
            .apply_to(&self.replicas.original)
            .map_err(ReconcileError::from)?;
        let replica = |rp: &crate::reconciler::ReplicaPlan| ReplicaView {
            rollback: render(rp.rollback.iter()),
            apply: render(rp.apply.iter()),
        };
        Ok(PlanView {
            merger: render(merger.order().iter()),
            replica1: replica(&plan.replica1),
            replica2: replica(&plan.replica2),
            trees: Trees {
                original: text_tree(&self.replicas.original),
                replica1: text_tree(&self.replicas.replica1),
                replica2: text_tree(&self.replicas.replica2),
                merged: text_tree(&merged),
            },
            plan_file: render_plan(&plan, &Blobs::inline()).map_err(CliError::from)?,
        })
    }
}

fn fresh_resolver(replicas: &Replicas, common: &CanonicalSet) -> Result<Resolver, ApiError> {
    let a = replicas.a.minus(common).map_err(ReconcileError::from)?;
    let b = replicas.b.minus(common).map_err(ReconcileError::from)?;
    Ok(Resolver::new(&a, &b)?)
}

fn render<'a>(cmds: impl Iterator<Item = &'a Command>) -> Vec<String> {
    cmds.map(ToString::to_string).collect()
}

#[derive(Debug, Serialize)]
pub struct CommandView {
    pub command: String,
    pub live: bool,
}

#[derive(Debug, Serialize)]
pub struct ConflictView {
    pub id: usize,
    pub kind: ConflictKind,
    pub a: String,
    pub b: String,
    pub live: bool,
}

#[derive(Debug, Serialize)]
pub struct StepView {
    pub conflict: usize,
    pub winner: Side,
    pub removed: Vec<String>,
    pub removed_edges: Vec<usize>,
}

impl From<&Step> for StepView {
    fn from(s: &Step) -> Self {
        Self {
            conflict: s.conflict,
            winner: s.winner,
            removed: render(s.removed.iter()),
            removed_edges: s.removed_edges.clone(),
        }
    }
}

#[derive(Debug, Serialize)]
pub struct SessionView {
    pub id: String,
    pub phase: Phase,
    pub common: Vec<String>,
    pub a: Vec<CommandView>,
    pub b: Vec<CommandView>,
    /// Every conflict of the initial graph; ids are positions.
    pub conflicts: Vec<ConflictView>,
    /// Ids of live conflicts, content conflicts first.
    pub live_conflicts: Vec<usize>,
    pub history: Vec<StepView>,
}

#[derive(Debug, Serialize)]
pub struct ResolveView {
    #[serde(flatten)]
    pub step: StepView,
    pub remaining: usize,
    pub session: SessionView,
}

#[derive(Debug, Serialize)]
pub struct UndoView {
    pub undone: bool,
    pub session: SessionView,
}

#[derive(Debug, Serialize)]
pub struct ReplicaView {
    pub rollback: Vec<String>,
    pub apply: Vec<String>,
}

#[derive(Debug, Serialize)]
pub struct Trees {
    pub original: String,
    pub replica1: String,
    pub replica2: String,
    pub merged: String,
}

#[derive(Debug, Serialize)]
pub struct PlanView {
    pub merger: Vec<String>,
    pub replica1: ReplicaView,
    pub replica2: ReplicaView,
    pub trees: Trees,
    /// The plan in the same file format `treesync reconcile` writes.
    pub plan_file: String,
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    message: String,
    live_conflicts: Option<Vec<usize>>,
}

impl ApiError {
    fn new(status: StatusCode, message: impl Into<String>) -> Self {
        Self {
            status,
            message: message.into(),
            live_conflicts: None,
        }
    }

    fn unresolved(s: &Session) -> Self {
        Self {
            status: StatusCode::CONFLICT,
            message: "conflicts remain".into(),
            live_conflicts: Some(s.resolver.live_conflicts().iter().map(|(i, _)| *i).collect()),
        }
    }

    pub fn status(&self) -> StatusCode {
        self.status
    }
}

impl From<CliError> for ApiError {
    fn from(e: CliError) -> Self {
        match e {
            CliError::Reconcile(r) => r.into(),
            CliError::Io(_) => ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()),
            other => ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, other.to_string()),
        }
    }
}

impl From<ReconcileError> for ApiError {
    fn from(e: ReconcileError) -> Self {
        let status = match e {
            ReconcileError::StaleConflict(_) => StatusCode::CONFLICT,
            ReconcileError::Internal(_) | ReconcileError::PlanMismatch { .. } => StatusCode::INTERNAL_SERVER_ERROR,
            _ => StatusCode::UNPROCESSABLE_ENTITY,
        };
        ApiError::new(status, e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        #[derive(Serialize)]
        struct Body {
            error: String,
            #[serde(skip_serializing_if = "Option::is_none")]
            live_conflicts: Option<Vec<usize>>,
        }
        let body = Body {
            error: self.message,
            live_conflicts: self.live_conflicts,
        };
        (self.status, Json(body)).into_response()
    }
}

/// Sessions in memory, mirrored to `state_dir` when one is configured.
pub struct Sessions {
    live: Mutex<HashMap<String, Arc<Mutex<Session>>>>,
    state_dir: Option<PathBuf>,
}

const INPUT_FILES: [&str; 3] = ["original.jsonl", "replica1.jsonl", "replica2.jsonl"];
const HISTORY_FILE: &str = "history.jsonl";

impl Sessions {
    pub fn in_memory() -> Self {
        Self {
            live: Mutex::new(HashMap::new()),
            state_dir: None,
        }
    }

    /// Restores every session found under `dir`.
    pub fn persistent(dir: PathBuf) -> Result<Self, ApiError> {
        let io = |e: std::io::Error| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string());
        fs::create_dir_all(&dir).map_err(io)?;
        let mut live = HashMap::new();
        for entry in fs::read_dir(&dir).map_err(io)? {
            let path = entry.map_err(io)?.path();
            if !path.join(HISTORY_FILE).exists() {
                continue;
            }
            let id = path.file_name().and_then(|n| n.to_str()).unwrap_or_default().to_owned();
            let session = load_session(&path, id.clone())?;
            live.insert(id, Arc::new(Mutex::new(session)));
        }
        Ok(Self {
            live: Mutex::new(live),
            state_dir: Some(dir),
        })
    }

    pub fn get(&self, id: &str) -> Result<Arc<Mutex<Session>>, ApiError> {
        self.live
            .lock()
            .expect("session table lock")
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, format!("no session {id}")))
    }

    pub fn create(&self, inputs: [Snapshot; 3]) -> Result<Arc<Mutex<Session>>, ApiError> {
        let id = hex::encode(rand::rng().random::<[u8; 8]>());
        let [o, r1, r2] = inputs;
        let session = Session::start(id.clone(), o, r1, r2)?;
        self.persist(&session, true)?;
        let handle = Arc::new(Mutex::new(session));
        self.live
            .lock()
            .expect("session table lock")
            .insert(id, Arc::clone(&handle));
        Ok(handle)
    }

    fn persist(&self, s: &Session, with_inputs: bool) -> Result<(), ApiError> {
        let Some(root) = &self.state_dir else {
            return Ok(());
        };
        let dir = root.join(&s.id);
        let fail = |e: String| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e);
        fs::create_dir_all(&dir).map_err(|e| fail(e.to_string()))?;
        if with_inputs {
            for (name, snap) in INPUT_FILES.iter().zip(&s.inputs) {
                snap.write(&dir.join(name)).map_err(|e| fail(e.to_string()))?;
            }
        }
        let mut history = String::new();
        for d in &s.decisions {
            history.push_str(&serde_json::to_string(d).expect("decisions serialize"));
            history.push('\n');
        }
        write_atomic(&dir.join(HISTORY_FILE), history.as_bytes()).map_err(|e| fail(e.to_string()))
    }
}

fn load_session(dir: &Path, id: String) -> Result<Session, ApiError> {
    let bad = |e: String| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, format!("{}: {e}", dir.display()));
    let mut inputs = Vec::new();
    for name in INPUT_FILES {
        inputs.push(Snapshot::read(&dir.join(name)).map_err(|e| bad(e.to_string()))?);
    }
    let [o, r1, r2]: [Snapshot; 3] = inputs.try_into().expect("three inputs");
    let mut s = Session::start(id, o, r1, r2)?;
    let history = fs::read_to_string(dir.join(HISTORY_FILE)).map_err(|e| bad(e.to_string()))?;
    for line in history.lines().filter(|l| !l.trim().is_empty()) {
        let d: Decision = serde_json::from_str(line).map_err(|e| bad(e.to_string()))?;
        s.resolve(d)?;
    }
    Ok(s)
}

#[derive(Debug, Deserialize)]
struct StartRequest {
    original: String,
    replica1: String,
    replica2: String,
}

#[derive(Debug, Deserialize)]
struct ResolveRequest {
    conflict_id: usize,
    winner: Side,
}

fn parse_inputs(texts: [String; 3]) -> Result<[Snapshot; 3], ApiError> {
    let mut out = Vec::new();
    for (name, text) in ["original", "replica1", "replica2"].iter().zip(texts) {
        let s = Snapshot::parse(&text, &Blobs::inline())
            .map_err(|e| ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, format!("{name}: {e}")))?;
        out.push(s);
    }
    Ok(out.try_into().expect("three inputs"))
}

async fn start(State(sessions): State<Arc<Sessions>>, req: Request) -> Result<impl IntoResponse, ApiError> {
    let multipart = req
        .headers()
        .get(header::CONTENT_TYPE)
        .and_then(|v| v.to_str().ok())
        .is_some_and(|v| v.starts_with("multipart/form-data"));
    let bad = |e: String| ApiError::new(StatusCode::BAD_REQUEST, e);
    let texts = if multipart {
        let mut form = Multipart::from_request(req, &())
            .await
            .map_err(|e| bad(e.body_text()))?;
        let mut fields: HashMap<String, String> = HashMap::new();
        while let Some(field) = form.next_field().await.map_err(|e| bad(e.body_text()))? {
            let name = field.name().unwrap_or_default().to_owned();
            let text = field.text().await.map_err(|e| bad(e.body_text()))?;
            fields.insert(name, text);
        }
        let mut take = |k: &str| fields.remove(k).ok_or_else(|| bad(format!("missing field `{k}`")));
        [take("original")?, take("replica1")?, take("replica2")?]
    } else {
        let Json(body): Json<StartRequest> = Json::from_request(req, &()).await.map_err(|e| bad(e.body_text()))?;
        [body.original, body.replica1, body.replica2]
    };
    let inputs = parse_inputs(texts)?;
    let sessions2 = Arc::clone(&sessions);
    let view = tokio::task::spawn_blocking(move || -> Result<SessionView, ApiError> {
        let handle = sessions2.create(inputs)?;
        let s = handle.lock().expect("session lock");
        Ok(s.view())
    })
    .await
    .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))??;
    Ok((StatusCode::CREATED, Json(view)))
}

async fn show(
    State(sessions): State<Arc<Sessions>>,
    UrlPath(id): UrlPath<String>,
) -> Result<Json<SessionView>, ApiError> {
    let handle = sessions.get(&id)?;
    let s = handle.lock().expect("session lock");
    Ok(Json(s.view()))
}

async fn resolve(
    State(sessions): State<Arc<Sessions>>,
    UrlPath(id): UrlPath<String>,
    Json(body): Json<ResolveRequest>,
) -> Result<Json<ResolveView>, ApiError> {
    let handle = sessions.get(&id)?;
    let mut s = handle.lock().expect("session lock");
    let step = match s.resolve(Decision {
        conflict: body.conflict_id,
        winner: body.winner,
    }) {
        Ok(step) => step,
        Err(e) if e.status == StatusCode::CONFLICT => return Err(ApiError::unresolved(&s).with_message(e.message)),
        Err(e) => return Err(e),
    };
    sessions.persist(&s, false)?;
    Ok(Json(ResolveView {
        step: StepView::from(&step),
        remaining: s.resolver.live_count(),
        session: s.view(),
    }))
}

impl ApiError {
    fn with_message(mut self, message: String) -> Self {
        self.message = message;
        self
    }
}

async fn undo(State(sessions): State<Arc<Sessions>>, UrlPath(id): UrlPath<String>) -> Result<Json<UndoView>, ApiError> {
    let handle = sessions.get(&id)?;
    let mut s = handle.lock().expect("session lock");
    let undone = s.undo()?;
    if undone {
        sessions.persist(&s, false)?;
    }
    Ok(Json(UndoView {
        undone,
        session: s.view(),
    }))
}

async fn plan(State(sessions): State<Arc<Sessions>>, UrlPath(id): UrlPath<String>) -> Result<Json<PlanView>, ApiError> {
    let handle = sessions.get(&id)?;
    let s = handle.lock().expect("session lock");
    Ok(Json(s.plan()?))
}

fn local_origin(origin: &HeaderValue) -> bool {
    let Ok(o) = origin.to_str() else { return false };
    let host = o
        .strip_prefix("http://")
        .or_else(|| o.strip_prefix("https://"))
        .unwrap_or_default();
    let host = match host.find(']') {
        Some(end) => &host[..=end],
        None => host.split_once(':').map_or(host, |(h, _)| h),
    };
    matches!(host, "localhost" | "127.0.0.1" | "[::1]")
}

pub fn router(sessions: Arc<Sessions>, ui_dir: Option<PathBuf>) -> Router {
    let cors = CorsLayer::new()
        .allow_origin(AllowOrigin::predicate(|origin, _| local_origin(origin)))
        .allow_methods([axum::http::Method::GET, axum::http::Method::POST])
        .allow_headers([header::CONTENT_TYPE]);
    let api = Router::new()
        .route("/sessions", post(start))
        .route("/sessions/{id}", get(show))
        .route("/sessions/{id}/resolve", post(resolve))
        .route("/sessions/{id}/undo", post(undo))
        .route("/sessions/{id}/plan", get(plan))
        .with_state(sessions);
    let app = match ui_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api,
    };
    app.layer(cors)
}

/// Serves until the process is stopped.
pub async fn serve(addr: SocketAddr, state_dir: Option<PathBuf>, ui_dir: Option<PathBuf>) -> std::io::Result<()> {
    let sessions = match state_dir {
        Some(dir) => Sessions::persistent(dir).map_err(|e| std::io::Error::other(e.message))?,
        None => Sessions::in_memory(),
    };
    let listener = tokio::net::TcpListener::bind(addr).await?;
    axum::serve(listener, router(Arc::new(sessions), ui_dir)).await
}
