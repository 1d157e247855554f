//! Drive the HTTP API in-process: login, issue a card, present it, approve it.

use std::sync::Arc;
use std::time::Duration;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use cardless::clock::SystemClock;
use cardless::entropy::EntropyMode;
use cardless::fraud::{ConstantScorer, FraudScorer};
use cardless::gateway::event_log::EventLog;
use cardless::gateway::http::{router, AppState};
use cardless::protocol::{Bank, BankConfig};
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

async fn call(app: &axum::Router, method: &str, uri: &str, token: Option<&str>, body: Value) -> (StatusCode, Value) {
    let mut req = Request::builder().method(method).uri(uri).header("content-type", "application/json");
    if let Some(t) = token {
        req = req.header("authorization", format!("Bearer {t}"));
    }
    let body = if body.is_null() { Body::empty() } else { Body::from(body.to_string()) };
    let resp = app.clone().oneshot(req.body(body).unwrap()).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    (status, serde_json::from_slice(&bytes).unwrap_or(Value::Null))
}

#[tokio::main]
async fn main() {
    let clock = Arc::new(SystemClock);
    let cfg = BankConfig { he_bits: 512, password_iterations: 1_000, ..BankConfig::default() };
    let bank = Bank::new(cfg, EntropyMode::Seeded(2), clock.clone(), Arc::new(EventLog::in_memory())).unwrap();
    bank.open_account("alice", "alice-password", "123456", 50_000).unwrap();
    let scorer: Arc<dyn FraudScorer> = Arc::new(ConstantScorer(0.1));
    let app = router(AppState::new(Arc::new(bank), Some(scorer), clock, EntropyMode::Seeded(3).rng()));

    let (_, login) = call(&app, "POST", "/api/login", None, json!({"username": "alice", "password": "alice-password"})).await;
    let token = login["token"].as_str().unwrap().to_owned();
    let (_, card) =
        call(&app, "POST", "/api/cards", Some(&token), json!({"usage": "one_time", "limit": 5000, "valid_for_seconds": 600}))
            .await;
    println!("card {} {}", card["card_id"], card["masked_pan"]);

    let merchant = app.clone();
    let qr = card["qr_payload"].clone();
    let purchase = tokio::spawn(async move {
        let body = json!({"qr_payload": qr, "counterparty": {"kind": "merchant", "id": "m-cafe", "category": "restaurant"}, "amount": 1200});
        call(&merchant, "POST", "/sim/present", None, body).await
    });

    let (_, pending) = call(&app, "GET", "/api/approvals?wait=5", Some(&token), Value::Null).await;
    println!("pending: {pending}");
    let session = pending[0]["session_id"].as_str().unwrap().to_owned();
    let (status, _) =
        call(&app, "POST", &format!("/api/approvals/{session}"), Some(&token), json!({"decision": "approve", "pin": "123456"}))
            .await;
    println!("approve -> {status}");

    tokio::time::sleep(Duration::from_millis(200)).await;
    let (_, presented) = purchase.await.unwrap();
    println!("merchant saw: {presented}");
    let (_, trace) = call(&app, "GET", &format!("/api/sessions/{session}/trace"), Some(&token), Value::Null).await;
    println!("outcome: {}", trace["outcome"]);
}
