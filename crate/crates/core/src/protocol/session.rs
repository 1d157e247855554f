use serde::{Deserialize, Serialize};

use super::{Actor, Counterparty, Outcome, Phase};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionEvent {
    pub ts: u64,
    pub actor: Actor,
    pub phase: Phase,
    pub detail: Vec<(String, String)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fraud_score: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub outcome: Option<Outcome>,
}

impl SessionEvent {
    pub fn new(ts: u64, actor: Actor, phase: Phase) -> Self {
        Self { ts, actor, phase, detail: Vec::new(), fraud_score: None, outcome: None }
    }

    pub fn terminal(ts: u64, actor: Actor, outcome: Outcome) -> Self {
        Self { outcome: Some(outcome), ..Self::new(ts, actor, Phase::Terminal) }
    }

    pub fn with(mut self, key: &str, value: impl ToString) -> Self {
        self.detail.push((key.to_owned(), value.to_string()));
        self
    }

    pub fn detail(&self, key: &str) -> Option<&str> {
        self.detail.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }
}

/// One payment attempt from presentation to its terminal outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PaymentSession {
    pub session_id: String,
    pub token_id: Option<String>,
    pub counterparty: Counterparty,
    pub amount: u64,
    pub opened_at: u64,
    pub card_id: Option<String>,
    pub account_id: Option<String>,
    pub phase: Phase,
    pub fraud_score: Option<f64>,
    pub events: Vec<SessionEvent>,
    pub outcome: Option<Outcome>,
}

/// What the merchant or ATM learns about a session.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CounterpartyNotice {
    pub ts: u64,
    pub phase: Phase,
    pub token_id: Option<String>,
    pub amount: u64,
    pub counterparty_id: String,
    pub outcome: Option<Outcome>,
}

impl PaymentSession {
    pub fn is_pending(&self) -> bool {
        self.outcome.is_none()
    }

    pub fn trace(&self) -> Vec<SessionEvent> {
        self.events.clone()
    }

    pub fn phases(&self) -> Vec<Phase> {
        self.events.iter().map(|e| e.phase).collect()
    }

    /// Presentation, payment confirmation and the final result, built from
    /// fields that carry no card or account identifiers.
    pub fn counterparty_view(&self) -> Vec<CounterpartyNotice> {
        self.events
            .iter()
            .filter(|e| matches!(e.phase, Phase::Step(6) | Phase::Step(10) | Phase::Terminal))
            .map(|e| CounterpartyNotice {
                ts: e.ts,
                phase: e.phase,
                token_id: self.token_id.clone(),
                amount: self.amount,
                counterparty_id: self.counterparty.id().to_owned(),
                outcome: e.outcome,
            })
            .collect()
    }
}

/// One card request and the phases it went through.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IssuanceRecord {
    pub issue_id: String,
    pub account_id: String,
    pub card_id: Option<String>,
    pub events: Vec<SessionEvent>,
    pub outcome: Option<Outcome>,
}
