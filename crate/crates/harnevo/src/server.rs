//! HTTP service for live play against a harness, demonstration recording,
//! archive browsing and replay.
//!
//! | method | path | body / result |
//! |---|---|---|
//! | POST | `/sessions` | `{variant, seed, opponent, human_seat?}` → session view |
//! | GET | `/sessions/{id}` | session view |
//! | POST | `/sessions/{id}/action` | `{action}` → session view, or 422 with the legal set |
//! | GET | `/sessions/{id}/legal` | `{your_turn, legal_actions}` |
//! | GET | `/archive` | index records |
//! | GET | `/archive/{candidate}` | index record, source, summary and file list |
//! | GET | `/archive/{candidate}/files/{*path}` | raw file |
//! | GET | `/demos` | `{demos: [id]}` |
//! | GET | `/demos/{id}` | trajectory records (JSONL) |
//! | GET | `/replay/{id}` | step stream (JSONL) for a demo id or `{candidate}.{seed}-leg{k}-s{seat}` |

use std::collections::HashMap;
use std::net::SocketAddr;
use std::sync::{Arc, Mutex};

use axum::extract::{Path, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use harnevo_core::env::{new_match, Action, Bid, MatchState, Observation, Outcome, Seat, Variant};
use harnevo_core::gateway::ModelGateway;
use harnevo_core::harness::{decide, DecisionSlot};
use harnevo_core::play::{naive_action, AgentSpec};
use harnevo_core::trajectory::{Actor, Trajectory};
use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;

use crate::archive::{Archive, ArchiveError};
use crate::gateway::ModelSource;
use crate::runner::{resolve_agent, TRAJECTORY_DIR};

#[derive(Debug, Error)]
pub enum ServeError {
    #[error("cannot bind {addr}: {source}")]
    Bind {
        addr: SocketAddr,
        #[source]
        source: std::io::Error,
    },
    #[error("server stopped: {0}")]
    Io(#[from] std::io::Error),
}

struct Session {
    match_state: MatchState,
    human_seat: Seat,
    opponent: AgentSpec,
    gateway: Box<dyn ModelGateway + Send>,
    opponent_decisions: u32,
    trajectory: Trajectory,
    demo_id: Option<String>,
    forfeit: Option<String>,
}

pub struct AppState {
    archive: Arc<Archive>,
    model: ModelSource,
    sessions: Mutex<HashMap<String, Arc<Mutex<Session>>>>,
    next_id: Mutex<u64>,
}

impl AppState {
    pub fn new(archive: Arc<Archive>, model: ModelSource) -> Arc<AppState> {
        Arc::new(AppState {
            archive,
            model,
            sessions: Mutex::new(HashMap::new()),
            next_id: Mutex::new(1),
        })
    }

    fn session(&self, id: &str) -> Result<Arc<Mutex<Session>>, ApiError> {
        lock(&self.sessions).get(id).cloned().ok_or_else(|| ApiError::not_found(format!("no session `{id}`")))
    }
}

fn lock<T>(m: &Mutex<T>) -> std::sync::MutexGuard<'_, T> {
    m.lock().unwrap_or_else(|p| p.into_inner())
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    body: serde_json::Value,
}

impl ApiError {
    fn new(status: StatusCode, message: impl Into<String>) -> ApiError {
        ApiError { status, body: json!({ "error": message.into() }) }
    }

    fn not_found(message: impl Into<String>) -> ApiError {
        ApiError::new(StatusCode::NOT_FOUND, message)
    }

    fn bad_request(message: impl Into<String>) -> ApiError {
        ApiError::new(StatusCode::BAD_REQUEST, message)
    }
}

impl From<ArchiveError> for ApiError {
    fn from(e: ArchiveError) -> ApiError {
        let status = match e {
            ArchiveError::UnknownCandidate(_) | ArchiveError::UnknownDemo(_) | ArchiveError::MissingFile(_) => StatusCode::NOT_FOUND,
            ArchiveError::BadPath(_) => StatusCode::BAD_REQUEST,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        ApiError::new(status, e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}

fn jsonl_response(text: String) -> Response {
    ([(header::CONTENT_TYPE, "application/x-ndjson")], text).into_response()
}

#[derive(Debug, Clone, Deserialize)]
pub struct CreateSession {
    /// `small3` or `onecall`; the enum spellings are accepted too.
    pub variant: String,
    pub seed: u64,
    pub opponent: String,
    #[serde(default)]
    pub human_seat: Seat,
}

#[derive(Debug, Clone, Deserialize)]
pub struct SubmitAction {
    pub action: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionView {
    pub session_id: String,
    pub human_seat: Seat,
    pub opponent: String,
    pub finished: bool,
    pub observation: Observation,
    pub legal_actions: Vec<Action>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub outcome: Option<Outcome>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reward: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub demo_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub opponent_forfeit: Option<String>,
}

fn view(id: &str, s: &Session) -> SessionView {
    let observation = s.match_state.render_observation(s.human_seat);
    let outcome = s.match_state.outcome();
    let legal_actions = if outcome.is_none() && observation.is_my_turn() {
        observation.legal_actions()
    } else {
        Vec::new()
    };
    SessionView {
        session_id: id.into(),
        human_seat: s.human_seat,
        opponent: s.opponent.id().into(),
        finished: outcome.is_some(),
        reward: outcome.as_ref().map(|o| o.reward(s.human_seat)),
        outcome,
        observation,
        legal_actions,
        demo_id: s.demo_id.clone(),
        opponent_forfeit: s.forfeit.clone(),
    }
}

/// Accepts the wire forms `[Bid] 3x5` and `[Call]`, plus `3x5` and `call`.
pub fn parse_human_action(text: &str) -> Option<Action> {
    let t = text.trim();
    if let Ok(a) = t.parse::<Action>() {
        return Some(a);
    }
    if t.eq_ignore_ascii_case("call") {
        return Some(Action::Call);
    }
    t.parse::<Bid>().ok().map(Action::Bid)
}

/// Let the opponent act until it is the human's turn or the game is over.
fn advance(archive: &Archive, id: &str, s: &mut Session) -> Result<(), ApiError> {
    while s.match_state.outcome().is_none() && s.match_state.turn() != s.human_seat {
        let seat = s.match_state.turn();
        let obs = s.match_state.render_observation(seat);
        let action = match &s.opponent {
            AgentSpec::Naive => Ok(naive_action(&obs, s.match_state.seed())),
            AgentSpec::Harness(d) => {
                let rollout = format!("session/{id}/s{seat}");
                let slot = DecisionSlot { rollout_id: &rollout, decision_index: s.opponent_decisions, model_name: "scripted" };
                decide(d, &obs, s.gateway.as_mut(), &slot).map(|d| d.action).map_err(|e| e.to_string())
            }
        };
        s.opponent_decisions += 1;
        s.gateway.take_records();
        match action.and_then(|a| s.match_state.apply_action(a).map_err(|e| e.to_string())) {
            Ok(_) => {}
            Err(message) => {
                s.forfeit = Some(message);
                s.match_state.forfeit(s.human_seat);
            }
        }
    }
    finish(archive, s)
}

fn finish(archive: &Archive, s: &mut Session) -> Result<(), ApiError> {
    if let (Some(outcome), None) = (s.match_state.outcome(), &s.demo_id) {
        let final_obs = s.match_state.render_observation(s.human_seat);
        s.trajectory.finish(outcome.reward(s.human_seat), Some(final_obs));
        s.demo_id = Some(archive.store_demonstration(&s.trajectory)?);
    }
    Ok(())
}

async fn create_session(
    State(app): State<Arc<AppState>>,
    Json(req): Json<CreateSession>,
) -> Result<(StatusCode, Json<SessionView>), ApiError> {
    if req.human_seat > 1 {
        return Err(ApiError::bad_request("human_seat must be 0 or 1"));
    }
    let variant: Variant = req.variant.parse().map_err(|e: harnevo_core::env::EnvError| ApiError::bad_request(e.to_string()))?;
    let opponent = resolve_agent(&req.opponent).map_err(|e| ApiError::bad_request(e.to_string()))?;
    let gateway = app.model.build().map_err(|e| ApiError::new(StatusCode::SERVICE_UNAVAILABLE, e.to_string()))?;
    let id = {
        let mut n = lock(&app.next_id);
        let id = format!("s{n}");
        *n += 1;
        id
    };
    let mut trajectory = Trajectory::new(&format!("session-{id}"), variant, req.seed, Actor::Human, req.human_seat);
    trajectory.policy_id = None;
    let mut session = Session {
        match_state: new_match(variant, req.seed),
        human_seat: req.human_seat,
        opponent,
        gateway,
        opponent_decisions: 0,
        trajectory,
        demo_id: None,
        forfeit: None,
    };
    let archive = app.archive.clone();
    let (session, v) = tokio::task::spawn_blocking(move || {
        advance(&archive, &id, &mut session).map(|_| {
            let v = view(&id, &session);
            (session, v)
        })
    })
    .await
    .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))??;
    lock(&app.sessions).insert(v.session_id.clone(), Arc::new(Mutex::new(session)));
    Ok((StatusCode::CREATED, Json(v)))
}

async fn get_session(State(app): State<Arc<AppState>>, Path(id): Path<String>) -> Result<Json<SessionView>, ApiError> {
    let s = app.session(&id)?;
    let s = lock(&s);
    Ok(Json(view(&id, &s)))
}

async fn submit_action(
    State(app): State<Arc<AppState>>,
    Path(id): Path<String>,
    Json(req): Json<SubmitAction>,
) -> Result<Json<SessionView>, ApiError> {
    let handle = app.session(&id)?;
    let archive = app.archive.clone();
    tokio::task::spawn_blocking(move || {
        let mut s = lock(&handle);
        if s.match_state.outcome().is_some() {
            return Err(ApiError::new(StatusCode::CONFLICT, "match is over"));
        }
        let obs = s.match_state.render_observation(s.human_seat);
        let legal = obs.legal_actions();
        let reject = |message: String| ApiError {
            status: StatusCode::UNPROCESSABLE_ENTITY,
            body: json!({ "error": message, "legal_actions": legal }),
        };
        let action = parse_human_action(&req.action).ok_or_else(|| reject(format!("cannot parse action `{}`", req.action)))?;
        if !obs.is_legal(&action) {
            return Err(reject(format!("`{action}` is not legal here")));
        }
        s.match_state.apply_action(action).map_err(|e| reject(e.to_string()))?;
        s.trajectory.push(obs, action);
        advance(&archive, &id, &mut s)?;
        Ok(Json(view(&id, &s)))
    })
    .await
    .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?
}

async fn legal(State(app): State<Arc<AppState>>, Path(id): Path<String>) -> Result<Json<serde_json::Value>, ApiError> {
    let s = app.session(&id)?;
    let s = lock(&s);
    let v = view(&id, &s);
    Ok(Json(json!({ "your_turn": !v.legal_actions.is_empty(), "legal_actions": v.legal_actions })))
}

async fn archive_index(State(app): State<Arc<AppState>>) -> Result<Response, ApiError> {
    Ok(Json(app.archive.entries()?).into_response())
}

async fn archive_candidate(State(app): State<Arc<AppState>>, Path(id): Path<String>) -> Result<Response, ApiError> {
    let d = app.archive.get(&id)?;
    Ok(Json(json!({
        "entry": d.entry,
        "source": d.source,
        "summary": crate::summary::render(&d.summary),
        "files": d.files,
    }))
    .into_response())
}

async fn archive_file(
    State(app): State<Arc<AppState>>,
    Path((id, path)): Path<(String, String)>,
) -> Result<Response, ApiError> {
    Ok(app.archive.read_file(&id, &path)?.into_response())
}

async fn demos(State(app): State<Arc<AppState>>) -> Result<Response, ApiError> {
    Ok(Json(json!({ "demos": app.archive.demo_ids()? })).into_response())
}

async fn demo(State(app): State<Arc<AppState>>, Path(id): Path<String>) -> Result<Response, ApiError> {
    Ok(jsonl_response(app.archive.demonstration(&id)?.to_jsonl()))
}

async fn replay(State(app): State<Arc<AppState>>, Path(id): Path<String>) -> Result<Response, ApiError> {
    match id.split_once('.') {
        Some((candidate, name)) => {
            let text = app.archive.read_file(candidate, &format!("{TRAJECTORY_DIR}/{name}.jsonl"))?;
            Trajectory::from_jsonl(&text).map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?;
            Ok(jsonl_response(text))
        }
        None => demo(State(app), Path(id)).await,
    }
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/sessions", post(create_session))
        .route("/sessions/{id}", get(get_session))
        .route("/sessions/{id}/action", post(submit_action))
        .route("/sessions/{id}/legal", get(legal))
        .route("/archive", get(archive_index))
        .route("/archive/{candidate}", get(archive_candidate))
        .route("/archive/{candidate}/files/{*path}", get(archive_file))
        .route("/demos", get(demos))
        .route("/demos/{id}", get(demo))
        .route("/replay/{id}", get(replay))
        .with_state(state)
}

/// Bind first so a busy port is reported before any request is served.
pub async fn bind(addr: SocketAddr) -> Result<tokio::net::TcpListener, ServeError> {
    tokio::net::TcpListener::bind(addr).await.map_err(|source| ServeError::Bind { addr, source })
}

pub async fn serve(listener: tokio::net::TcpListener, state: Arc<AppState>) -> Result<(), ServeError> {
    axum::serve(listener, router(state)).await?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn human_action_forms() {
        assert_eq!(parse_human_action("[Call]"), Some(Action::Call));
        assert_eq!(parse_human_action(" call "), Some(Action::Call));
        assert_eq!(parse_human_action("[Bid] 2x5"), Some(Action::bid(2, 5)));
        assert_eq!(parse_human_action("2x5"), Some(Action::bid(2, 5)));
        assert_eq!(parse_human_action("raise"), None);
    }
}
