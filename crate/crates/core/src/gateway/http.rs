//! HTTP API.
//!
//! | method | path | body | response |
//! |---|---|---|---|
//! | POST | `/api/login` | `{username, password}` | `{token}` |
//! | POST | `/api/cards` | `{usage, limit, valid_for_seconds}` | `{card_id, masked_pan, sealed_card, qr_payload, expires_at}` |
//! | GET | `/api/cards` | | `[CardSummary]` |
//! | GET | `/api/approvals?wait=secs` | | `[ApprovalQuery]` (long-poll) |
//! | POST | `/api/approvals/{session_id}` | `{decision, pin}` | `{status}` |
//! | GET | `/api/sessions/{id}/trace` | | `{session_id, outcome, events}` |
//! | POST | `/sim/present` | `{qr_payload, counterparty, amount}` | `{session_id, phase, outcome, notices}` |
//!
//! Every `/api` call except login needs `Authorization: Bearer <token>`.
//! Errors are `{"error": "..."}`.

use std::sync::{Arc, Mutex};
use std::time::Duration;

use axum::extract::{Path, Query, State};
use axum::http::{HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::auth::Credentials;
use super::inbox::{ApprovalInbox, ResolveError};
use super::sessions::{AuthzError, BearerSessions};
use crate::entropy::BoxRng;
use crate::fraud::FraudScorer;
use crate::protocol::{
    ApprovalDecision, Bank, Counterparty, CounterpartyNotice, Outcome, Phase, PolicyRequest, ProtocolError, SessionEvent,
    Usage,
};
use crate::token::qr_parse;

pub const LONG_POLL_HOLD: Duration = Duration::from_secs(25);

#[derive(Clone)]
pub struct AppState {
    pub bank: Arc<Bank>,
    pub inbox: Arc<ApprovalInbox>,
    pub sessions: Arc<BearerSessions>,
    pub scorer: Option<Arc<dyn FraudScorer>>,
    pub rng: Arc<Mutex<BoxRng>>,
    pub long_poll: Duration,
}

impl AppState {
    pub fn new(bank: Arc<Bank>, scorer: Option<Arc<dyn FraudScorer>>, clock: Arc<dyn crate::clock::Clock>, rng: BoxRng) -> Self {
        Self {
            bank,
            inbox: Arc::new(ApprovalInbox::new()),
            sessions: Arc::new(BearerSessions::new(clock)),
            scorer,
            rng: Arc::new(Mutex::new(rng)),
            long_poll: LONG_POLL_HOLD,
        }
    }
}

pub struct ApiError(StatusCode, String);

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.0, Json(json!({ "error": self.1 }))).into_response()
    }
}

fn err(status: StatusCode, msg: impl Into<String>) -> ApiError {
    ApiError(status, msg.into())
}

fn internal(e: impl std::fmt::Display) -> ApiError {
    tracing::error!("internal error: {e}");
    err(StatusCode::INTERNAL_SERVER_ERROR, "internal error")
}

type ApiResult<T> = Result<Json<T>, ApiError>;

fn authorize(state: &AppState, headers: &HeaderMap) -> Result<String, ApiError> {
    let token = headers
        .get(axum::http::header::AUTHORIZATION)
        .and_then(|v| v.to_str().ok())
        .and_then(|v| v.strip_prefix("Bearer "))
        .ok_or_else(|| err(StatusCode::UNAUTHORIZED, "unauthorized"))?;
    state.sessions.authorize(token.trim()).map_err(|e| match e {
        AuthzError::Unauthorized => err(StatusCode::UNAUTHORIZED, "unauthorized"),
        AuthzError::RateLimited => err(StatusCode::TOO_MANY_REQUESTS, "request cap reached"),
    })
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> T + Send + 'static) -> Result<T, ApiError> {
    tokio::task::spawn_blocking(f).await.map_err(internal)
}

#[derive(Deserialize)]
struct LoginRequest {
    username: String,
    password: String,
}

#[derive(Serialize, Deserialize)]
pub struct LoginResponse {
    pub token: String,
}

async fn login(State(state): State<AppState>, Json(req): Json<LoginRequest>) -> ApiResult<LoginResponse> {
    let bank = state.bank.clone();
    let creds = Credentials::new(req.username, req.password);
    let account = blocking(move || bank.authenticate(&creds)).await?;
    match account {
        Ok(account_id) => {
            let mut rng = state.rng.lock().unwrap_or_else(|e| e.into_inner());
            Ok(Json(LoginResponse { token: state.sessions.open(&account_id, &mut **rng) }))
        }
        Err(_) => Err(err(StatusCode::UNAUTHORIZED, "invalid credentials")),
    }
}

#[derive(Deserialize)]
struct CardRequest {
    #[serde(default)]
    usage: Option<Usage>,
    #[serde(default)]
    limit: Option<u64>,
    #[serde(default)]
    valid_for_seconds: Option<u64>,
    #[serde(default)]
    networks: Option<Vec<u8>>,
}

#[derive(Serialize, Deserialize)]
pub struct CardResponse {
    pub card_id: String,
    pub masked_pan: String,
    pub sealed_card: crate::crypto::SealedCard,
    pub qr_payload: String,
    pub expires_at: u64,
}

async fn create_card(State(state): State<AppState>, headers: HeaderMap, Json(req): Json<CardRequest>) -> ApiResult<CardResponse> {
    let account_id = authorize(&state, &headers)?;
    let policy = PolicyRequest { usage: req.usage, limit: req.limit, valid_for: req.valid_for_seconds, networks: req.networks };
    let bank = state.bank.clone();
    match blocking(move || bank.request_card_for(&account_id, &policy)).await? {
        Ok(card) => Ok(Json(CardResponse {
            card_id: card.card_id,
            masked_pan: card.masked_pan,
            sealed_card: card.sealed_card,
            qr_payload: card.qr_payload,
            expires_at: card.expires_at,
        })),
        Err(ProtocolError::CardGenerateFailed { .. }) => {
            Err(err(StatusCode::UNPROCESSABLE_ENTITY, Outcome::CardGenerateFailed.message()))
        }
        Err(e) => Err(internal(e)),
    }
}

async fn list_cards(State(state): State<AppState>, headers: HeaderMap) -> ApiResult<Vec<crate::protocol::engine::CardSummary>> {
    let account_id = authorize(&state, &headers)?;
    state.bank.cards_for(&account_id).map(Json).map_err(internal)
}

#[derive(Deserialize)]
struct WaitQuery {
    wait: Option<u64>,
}

async fn list_approvals(
    State(state): State<AppState>,
    headers: HeaderMap,
    Query(q): Query<WaitQuery>,
) -> ApiResult<Vec<crate::protocol::ApprovalQuery>> {
    let account_id = authorize(&state, &headers)?;
    let hold = q.wait.map_or(state.long_poll, Duration::from_secs).min(state.long_poll);
    let deadline = tokio::time::Instant::now() + hold;
    let mut changes = state.inbox.subscribe();
    loop {
        changes.borrow_and_update();
        let pending = state.inbox.pending_for(&account_id);
        if !pending.is_empty() {
            return Ok(Json(pending));
        }
        match tokio::time::timeout_at(deadline, changes.changed()).await {
            Ok(Ok(())) => continue,
            _ => return Ok(Json(Vec::new())),
        }
    }
}

#[derive(Deserialize)]
struct ResolveRequest {
    decision: ApprovalDecision,
    pin: String,
}

async fn resolve_approval(
    State(state): State<AppState>,
    headers: HeaderMap,
    Path(session_id): Path<String>,
    Json(req): Json<ResolveRequest>,
) -> ApiResult<serde_json::Value> {
    let account_id = authorize(&state, &headers)?;
    let bank = state.bank.clone();
    let acct = account_id.clone();
    let pin_ok = blocking(move || bank.verify_pin(&acct, &req.pin)).await?;
    match state.inbox.resolve(&account_id, &session_id, req.decision, pin_ok) {
        Ok(()) => Ok(Json(json!({ "status": "accepted" }))),
        Err(e @ ResolveError::NotFound) => Err(err(StatusCode::NOT_FOUND, e.to_string())),
        Err(e @ ResolveError::AlreadyResolved) => Err(err(StatusCode::CONFLICT, e.to_string())),
        Err(e @ ResolveError::WrongPin) => Err(err(StatusCode::FORBIDDEN, e.to_string())),
        Err(e @ ResolveError::InvalidDecision) => Err(err(StatusCode::BAD_REQUEST, e.to_string())),
    }
}

#[derive(Serialize, Deserialize)]
pub struct TraceResponse {
    pub session_id: String,
    pub outcome: Option<Outcome>,
    pub events: Vec<SessionEvent>,
}

async fn session_trace(
    State(state): State<AppState>,
    headers: HeaderMap,
    Path(session_id): Path<String>,
) -> ApiResult<TraceResponse> {
    let account_id = authorize(&state, &headers)?;
    match state.bank.session(&session_id) {
        Some(s) if s.account_id.as_deref() == Some(account_id.as_str()) => {
            Ok(Json(TraceResponse { session_id: s.session_id.clone(), outcome: s.outcome, events: s.trace() }))
        }
        _ => Err(err(StatusCode::NOT_FOUND, "unknown session")),
    }
}

#[derive(Deserialize)]
struct PresentRequest {
    qr_payload: String,
    counterparty: Counterparty,
    amount: u64,
}

#[derive(Serialize, Deserialize)]
pub struct PresentResponse {
    pub session_id: String,
    pub phase: Phase,
    pub outcome: Option<Outcome>,
    pub notices: Vec<CounterpartyNotice>,
}

async fn present(State(state): State<AppState>, Json(req): Json<PresentRequest>) -> ApiResult<PresentResponse> {
    let token = qr_parse(&req.qr_payload).map_err(|e| err(StatusCode::BAD_REQUEST, e.to_string()))?;
    let bank = state.bank.clone();
    let session = blocking(move || bank.present_card(&token, &req.counterparty, req.amount))
        .await?
        .map_err(|e| match e {
            ProtocolError::InvalidAmount => err(StatusCode::BAD_REQUEST, e.to_string()),
            e => internal(e),
        })?;
    if session.is_pending() {
        let bank = state.bank.clone();
        let inbox = state.inbox.clone();
        let scorer = state.scorer.clone();
        let id = session.session_id.clone();
        tokio::task::spawn_blocking(move || {
            if let Err(e) = bank.adjudicate(&id, scorer.as_deref(), &*inbox) {
                tracing::error!(session = %id, "adjudication failed: {e}");
            }
        });
    }
    Ok(Json(PresentResponse {
        notices: session.counterparty_view(),
        session_id: session.session_id,
        phase: session.phase,
        outcome: session.outcome,
    }))
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/api/login", post(login))
        .route("/api/cards", post(create_card).get(list_cards))
        .route("/api/approvals", get(list_approvals))
        .route("/api/approvals/{session_id}", post(resolve_approval))
        .route("/api/sessions/{id}/trace", get(session_trace))
        .route("/sim/present", post(present))
        .with_state(state)
}
