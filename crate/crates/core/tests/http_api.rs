use std::sync::Arc;
use std::time::{Duration, Instant};

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use cardless::clock::ManualClock;
use cardless::entropy::EntropyMode;
use cardless::fraud::{ConstantScorer, FraudScorer};
use cardless::gateway::event_log::EventLog;
use cardless::gateway::http::{router, AppState};
use cardless::gateway::sessions::BearerSessions;
use cardless::protocol::{Bank, BankConfig};
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

const T0: u64 = 1_700_000_000;
const PASSWORD: &str = "alice-password";
const PIN: &str = "123456";

struct Harness {
    app: Router,
    bank: Arc<Bank>,
    clock: Arc<ManualClock>,
}

fn harness_with(approval_timeout: Duration, cap: u64, score: Option<f64>) -> Harness {
    let clock = Arc::new(ManualClock::new(T0));
    let cfg = BankConfig { he_bits: 256, password_iterations: 1_000, approval_timeout, ..BankConfig::default() };
    let bank = Arc::new(Bank::new(cfg, EntropyMode::Seeded(9), clock.clone(), Arc::new(EventLog::in_memory())).unwrap());
    bank.open_account("alice", PASSWORD, PIN, 100_000).unwrap();
    bank.open_account("mallory", "mallory-password", "654321", 100_000).unwrap();
    let scorer = score.map(|s| Arc::new(ConstantScorer(s)) as Arc<dyn FraudScorer>);
    let mut state = AppState::new(bank.clone(), scorer, clock.clone(), EntropyMode::Seeded(10).rng());
    state.sessions = Arc::new(BearerSessions::with_limits(clock.clone(), 1_800, cap));
    state.long_poll = Duration::from_secs(5);
    Harness { app: router(state), bank, clock }
}

fn harness() -> Harness {
    harness_with(Duration::from_secs(10), 10_000, Some(0.1))
}

async fn raw(app: &Router, method: &str, uri: &str, token: Option<&str>, body: Option<Value>) -> (StatusCode, Vec<u8>) {
    let mut req = Request::builder().method(method).uri(uri).header("content-type", "application/json");
    if let Some(t) = token {
        req = req.header("authorization", format!("Bearer {t}"));
    }
    let body = body.map_or_else(Body::empty, |b| Body::from(b.to_string()));
    let resp = app.clone().oneshot(req.body(body).unwrap()).await.unwrap();
    let status = resp.status();
    (status, resp.into_body().collect().await.unwrap().to_bytes().to_vec())
}

async fn call(app: &Router, method: &str, uri: &str, token: Option<&str>, body: Option<Value>) -> (StatusCode, Value) {
    let (status, bytes) = raw(app, method, uri, token, body).await;
    (status, serde_json::from_slice(&bytes).unwrap_or(Value::Null))
}

async fn login(app: &Router, user: &str, password: &str) -> String {
    let (status, v) = call(app, "POST", "/api/login", None, Some(json!({"username": user, "password": password}))).await;
    assert_eq!(status, StatusCode::OK, "{v}");
    v["token"].as_str().unwrap().to_owned()
}

async fn new_card(app: &Router, token: &str, usage: &str) -> Value {
    let (status, v) =
        call(app, "POST", "/api/cards", Some(token), Some(json!({"usage": usage, "limit": 20_000, "valid_for_seconds": 3_600})))
            .await;
    assert_eq!(status, StatusCode::OK, "{v}");
    v
}

async fn present(app: &Router, qr: &Value, amount: u64) -> (StatusCode, Value) {
    let body = json!({
        "qr_payload": qr,
        "counterparty": {"kind": "merchant", "id": "m-cafe", "category": "restaurant"},
        "amount": amount,
    });
    call(app, "POST", "/sim/present", None, Some(body)).await
}

async fn wait_outcome(app: &Router, token: &str, session: &str) -> Value {
    let deadline = Instant::now() + Duration::from_secs(10);
    loop {
        let (status, v) = call(app, "GET", &format!("/api/sessions/{session}/trace"), Some(token), None).await;
        assert_eq!(status, StatusCode::OK, "{v}");
        if !v["outcome"].is_null() {
            return v;
        }
        assert!(Instant::now() < deadline, "session {session} never finished");
        tokio::time::sleep(Duration::from_millis(20)).await;
    }
}

async fn pending(app: &Router, token: &str) -> Vec<Value> {
    let (status, v) = call(app, "GET", "/api/approvals?wait=5", Some(token), None).await;
    assert_eq!(status, StatusCode::OK);
    v.as_array().unwrap().clone()
}

#[tokio::test]
async fn unknown_user_and_wrong_password_are_indistinguishable() {
    let h = harness();
    let (s1, wrong) = raw(&h.app, "POST", "/api/login", None, Some(json!({"username": "alice", "password": "nope"}))).await;
    let (s2, unknown) = raw(&h.app, "POST", "/api/login", None, Some(json!({"username": "zed", "password": "nope"}))).await;
    assert_eq!(s1, StatusCode::UNAUTHORIZED);
    assert_eq!(s2, StatusCode::UNAUTHORIZED);
    assert_eq!(wrong, unknown);
    login(&h.app, "alice", PASSWORD).await;
}

#[tokio::test]
async fn bearer_token_required_forged_and_expired_rejected() {
    let h = harness();
    assert_eq!(call(&h.app, "GET", "/api/cards", None, None).await.0, StatusCode::UNAUTHORIZED);
    let forged = "ab".repeat(32);
    assert_eq!(call(&h.app, "GET", "/api/cards", Some(&forged), None).await.0, StatusCode::UNAUTHORIZED);

    let token = login(&h.app, "alice", PASSWORD).await;
    assert_eq!(token.len(), 64);
    assert_eq!(call(&h.app, "GET", "/api/cards", Some(&token), None).await.0, StatusCode::OK);
    h.clock.advance(1_799);
    assert_eq!(call(&h.app, "GET", "/api/cards", Some(&token), None).await.0, StatusCode::OK);
    h.clock.advance(1_801);
    assert_eq!(call(&h.app, "GET", "/api/cards", Some(&token), None).await.0, StatusCode::UNAUTHORIZED);
}

#[tokio::test]
async fn request_cap_gives_429() {
    let h = harness_with(Duration::from_secs(1), 3, Some(0.1));
    let token = login(&h.app, "alice", PASSWORD).await;
    for _ in 0..3 {
        assert_eq!(call(&h.app, "GET", "/api/cards", Some(&token), None).await.0, StatusCode::OK);
    }
    assert_eq!(call(&h.app, "GET", "/api/cards", Some(&token), None).await.0, StatusCode::TOO_MANY_REQUESTS);
}

#[tokio::test]
async fn card_issue_and_list_show_only_masked_numbers() {
    let h = harness();
    let token = login(&h.app, "alice", PASSWORD).await;
    let card = new_card(&h.app, &token, "one_time").await;
    let card_id = card["card_id"].as_str().unwrap();
    let pan = h.bank.snapshot().cards[card_id].pan.pan();
    let masked = card["masked_pan"].as_str().unwrap();
    assert!(masked.starts_with(&pan[..6]) && masked.ends_with(&pan[12..]));
    assert!(card["qr_payload"].as_str().unwrap().starts_with("cardless://v1/"));
    assert!(card["sealed_card"].is_string());

    let (status, bytes) = raw(&h.app, "GET", "/api/cards", Some(&token), None).await;
    assert_eq!(status, StatusCode::OK);
    let text = String::from_utf8(bytes).unwrap();
    assert!(!text.contains(&pan));
    let list: Value = serde_json::from_str(&text).unwrap();
    assert_eq!(list.as_array().unwrap().len(), 1);
    assert_eq!(list[0]["masked_pan"], card["masked_pan"]);

    let other = login(&h.app, "mallory", "mallory-password").await;
    let (_, theirs) = call(&h.app, "GET", "/api/cards", Some(&other), None).await;
    assert_eq!(theirs, json!([]));
}

#[tokio::test]
async fn empty_policy_is_422_with_verbatim_message() {
    let h = harness();
    let token = login(&h.app, "alice", PASSWORD).await;
    let (status, v) = call(&h.app, "POST", "/api/cards", Some(&token), Some(json!({}))).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(v["error"], "Virtual card generate failed!");
}

#[tokio::test]
async fn approval_round_trip() {
    let h = harness();
    let token = login(&h.app, "alice", PASSWORD).await;
    let card = new_card(&h.app, &token, "one_time").await;

    // Poll first so the approval has to be pushed to a waiting client.
    let poller = {
        let app = h.app.clone();
        let token = token.clone();
        tokio::spawn(async move {
            let started = Instant::now();
            let items = pending(&app, &token).await;
            (items, started.elapsed())
        })
    };
    tokio::time::sleep(Duration::from_millis(100)).await;
    let presented_at = Instant::now();
    let (status, p) = present(&h.app, &card["qr_payload"], 1_500).await;
    assert_eq!(status, StatusCode::OK, "{p}");
    let session = p["session_id"].as_str().unwrap().to_owned();
    assert_eq!(p["phase"], 7);
    assert!(p["outcome"].is_null());
    assert!(p["notices"][0]["token_id"].is_string());

    let (items, _) = poller.await.unwrap();
    assert!(presented_at.elapsed() < Duration::from_secs(1), "approval took {:?}", presented_at.elapsed());
    assert_eq!(items.len(), 1);
    assert_eq!(items[0]["session_id"], session.as_str());
    assert_eq!(items[0]["amount"], 1_500);

    let other = login(&h.app, "mallory", "mallory-password").await;
    let uri = format!("/api/approvals/{session}");
    let (s, _) = call(&h.app, "POST", &uri, Some(&other), Some(json!({"decision": "approve", "pin": "654321"}))).await;
    assert_eq!(s, StatusCode::NOT_FOUND, "another account cannot answer");
    let (s, _) = call(&h.app, "POST", &uri, Some(&token), Some(json!({"decision": "approve", "pin": "000000"}))).await;
    assert_eq!(s, StatusCode::FORBIDDEN);
    assert_eq!(pending(&h.app, &token).await.len(), 1, "wrong PIN leaves the approval waiting");
    let (s, _) = call(&h.app, "POST", &uri, Some(&token), Some(json!({"decision": "timeout", "pin": PIN}))).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);

    let (s, _) = call(&h.app, "POST", &uri, Some(&token), Some(json!({"decision": "approve", "pin": PIN}))).await;
    assert_eq!(s, StatusCode::OK);
    let (s, _) = call(&h.app, "POST", &uri, Some(&token), Some(json!({"decision": "approve", "pin": PIN}))).await;
    assert_eq!(s, StatusCode::CONFLICT);

    let trace = wait_outcome(&h.app, &token, &session).await;
    assert_eq!(trace["outcome"], "Payment completed successfully!");
    let phases: Vec<Value> = trace["events"].as_array().unwrap().iter().map(|e| e["phase"].clone()).collect();
    assert_eq!(phases, [json!(6), json!(7), json!(8), json!(9), json!(10), json!(11), json!("terminal")]);
    assert_eq!(call(&h.app, "GET", &format!("/api/sessions/{session}/trace"), Some(&other), None).await.0, StatusCode::NOT_FOUND);

    let (s, _) = call(&h.app, "POST", "/api/approvals/sess-999999", Some(&token), Some(json!({"decision": "approve", "pin": PIN}))).await;
    assert_eq!(s, StatusCode::NOT_FOUND);

    // One-time card: presenting the same code again is refused outright.
    let (_, again) = present(&h.app, &card["qr_payload"], 1_500).await;
    assert_eq!(again["outcome"], "Declined: card retired");
}

#[tokio::test]
async fn decline_reports_user_approval_failed() {
    let h = harness();
    let token = login(&h.app, "alice", PASSWORD).await;
    let card = new_card(&h.app, &token, "multi_use").await;
    let (_, p) = present(&h.app, &card["qr_payload"], 900).await;
    let session = p["session_id"].as_str().unwrap().to_owned();
    assert_eq!(pending(&h.app, &token).await.len(), 1);
    let uri = format!("/api/approvals/{session}");
    let (s, _) = call(&h.app, "POST", &uri, Some(&token), Some(json!({"decision": "decline", "pin": PIN}))).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(wait_outcome(&h.app, &token, &session).await["outcome"], "User approval failed!");
}

#[tokio::test]
async fn unanswered_approval_times_out() {
    let h = harness_with(Duration::from_millis(300), 10_000, Some(0.1));
    let token = login(&h.app, "alice", PASSWORD).await;
    let card = new_card(&h.app, &token, "multi_use").await;
    let (_, p) = present(&h.app, &card["qr_payload"], 900).await;
    let session = p["session_id"].as_str().unwrap().to_owned();
    let trace = wait_outcome(&h.app, &token, &session).await;
    assert_eq!(trace["outcome"], "User approval failed!");
    assert!(pending(&h.app, &token).await.is_empty());
    let uri = format!("/api/approvals/{session}");
    let (s, _) = call(&h.app, "POST", &uri, Some(&token), Some(json!({"decision": "approve", "pin": PIN}))).await;
    assert_eq!(s, StatusCode::CONFLICT);
}

#[tokio::test]
async fn fraud_and_missing_model_never_reach_the_inbox() {
    for (score, expected) in [(Some(0.9), "Fraudulent transaction!"), (None, "Fraud detection failed!")] {
        let h = harness_with(Duration::from_secs(10), 10_000, score);
        let token = login(&h.app, "alice", PASSWORD).await;
        let card = new_card(&h.app, &token, "one_time").await;
        let (_, p) = present(&h.app, &card["qr_payload"], 900).await;
        let session = p["session_id"].as_str().unwrap().to_owned();
        assert_eq!(wait_outcome(&h.app, &token, &session).await["outcome"], expected);
    }
}

#[tokio::test]
async fn bad_codes_at_the_counter() {
    let h = harness();
    let token = login(&h.app, "alice", PASSWORD).await;
    let card = new_card(&h.app, &token, "one_time").await;

    let (s, v) = present(&h.app, &json!("not a payment code"), 100).await;
    assert_eq!(s, StatusCode::BAD_REQUEST, "{v}");
    assert!(v["error"].is_string());

    let qr = card["qr_payload"].as_str().unwrap();
    let bytes = cardless::token::qr_parse(qr).unwrap();
    let mut forged = bytes.clone();
    let last = forged.len() - 1;
    forged[last] ^= 0x80;
    let (s, v) = present(&h.app, &json!(cardless::token::qr_payload(&forged)), 100).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v["outcome"], "Declined: token failed authentication");

    h.clock.advance(3_601);
    let (_, v) = present(&h.app, &card["qr_payload"], 100).await;
    assert_eq!(v["outcome"], "Declined: token expired");
    let (s, _) = present(&h.app, &card["qr_payload"], 0).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
}
