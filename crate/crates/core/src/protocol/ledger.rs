use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use super::session::{IssuanceRecord, PaymentSession, SessionEvent};
use super::types::{Account, CardPolicy, CardState, Counterparty, VirtualCard};
use super::Phase;
use crate::card_numbering::{PanParts, PanRegistry};
use crate::crypto::{open_card, Ciphertext, SealKey, SealedCard};
use crate::fraud::TxnRecord;
use crate::gateway::auth::CredentialRecord;

/// A single state change. The event log is a sequence of these.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "payload", rename_all = "snake_case")]
pub enum LedgerEvent {
    AccountOpened {
        account_id: String,
        username: String,
        credentials: CredentialRecord,
        balance: u64,
    },
    IssueTrace {
        issue_id: String,
        account_id: String,
        event: SessionEvent,
    },
    CardIssued {
        card_id: String,
        issue_id: String,
        account_id: String,
        sealed_pan: SealedCard,
        masked_pan: String,
        policy: CardPolicy,
        issued_at: u64,
        expires_at: u64,
        spent: Ciphertext,
    },
    CardActivated {
        card_id: String,
        qr_payload: String,
    },
    SessionOpened {
        session_id: String,
        token_id: Option<String>,
        counterparty: Counterparty,
        amount: u64,
        opened_at: u64,
    },
    SessionBound {
        session_id: String,
        card_id: String,
        account_id: String,
    },
    Trace {
        session_id: String,
        event: SessionEvent,
    },
    TxnRecorded {
        account_id: String,
        record: TxnRecord,
    },
    Settled {
        session_id: String,
        card_id: String,
        account_id: String,
        amount: u64,
        spent_after: Ciphertext,
        retire: bool,
        record: TxnRecord,
    },
}

impl LedgerEvent {
    pub fn kind(&self) -> &'static str {
        match self {
            Self::AccountOpened { .. } => "account_opened",
            Self::IssueTrace { .. } => "issue_trace",
            Self::CardIssued { .. } => "card_issued",
            Self::CardActivated { .. } => "card_activated",
            Self::SessionOpened { .. } => "session_opened",
            Self::SessionBound { .. } => "session_bound",
            Self::Trace { .. } => "trace",
            Self::TxnRecorded { .. } => "txn_recorded",
            Self::Settled { .. } => "settled",
        }
    }

    /// Session or issuance id and phase, used to order events canonically.
    pub fn session_key(&self) -> (&str, Option<Phase>) {
        match self {
            Self::IssueTrace { issue_id, event, .. } => (issue_id, Some(event.phase)),
            Self::Trace { session_id, event } => (session_id, Some(event.phase)),
            Self::SessionOpened { session_id, .. }
            | Self::SessionBound { session_id, .. }
            | Self::Settled { session_id, .. } => (session_id, None),
            Self::CardIssued { issue_id, .. } => (issue_id, None),
            Self::AccountOpened { account_id, .. } | Self::TxnRecorded { account_id, .. } => (account_id, None),
            Self::CardActivated { card_id, .. } => (card_id, None),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LedgerError {
    #[error("{0} already exists")]
    Exists(String),
    #[error("{0} not found")]
    Missing(String),
    #[error("{0}")]
    Rejected(String),
}

fn reject(msg: impl Into<String>) -> LedgerError {
    LedgerError::Rejected(msg.into())
}

/// Everything the bank and network know, rebuilt purely from events.
#[derive(Debug, Clone, Default)]
pub struct LedgerState {
    pub accounts: BTreeMap<String, Account>,
    pub usernames: BTreeMap<String, String>,
    pub cards: BTreeMap<String, VirtualCard>,
    pub registry: PanRegistry,
    pub sessions: BTreeMap<String, PaymentSession>,
    pub issuances: BTreeMap<String, IssuanceRecord>,
    /// Amount paid out to each counterparty id.
    pub credits: BTreeMap<String, u64>,
}

fn push_event(events: &mut Vec<SessionEvent>, event: &SessionEvent, done: bool, id: &str) -> Result<(), LedgerError> {
    if done {
        return Err(reject(format!("{id} already finished")));
    }
    if let Some(last) = events.last() {
        if event.phase <= last.phase {
            return Err(reject(format!("{id}: phase {} after {}", event.phase, last.phase)));
        }
        if event.ts < last.ts {
            return Err(reject(format!("{id}: event time went backwards")));
        }
    }
    events.push(event.clone());
    Ok(())
}

impl LedgerState {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn next_account_id(&self) -> String {
        format!("acct-{:04}", self.accounts.len() + 1)
    }

    pub fn next_card_id(&self) -> String {
        format!("card-{:06}", self.cards.len() + 1)
    }

    pub fn next_session_id(&self) -> String {
        format!("sess-{:06}", self.sessions.len() + 1)
    }

    pub fn next_issue_id(&self) -> String {
        format!("issue-{:06}", self.issuances.len() + 1)
    }

    pub fn account_by_username(&self, username: &str) -> Option<&Account> {
        self.usernames.get(username).and_then(|id| self.accounts.get(id))
    }

    /// Validates `event` against the current state and applies it. The state
    /// is left unchanged on error.
    pub fn apply(&mut self, event: &LedgerEvent, storage: &SealKey) -> Result<(), LedgerError> {
        match event {
            LedgerEvent::AccountOpened { account_id, username, credentials, balance } => {
                if self.accounts.contains_key(account_id) {
                    return Err(LedgerError::Exists(account_id.clone()));
                }
                if self.usernames.contains_key(username) {
                    return Err(LedgerError::Exists(format!("username {username}")));
                }
                self.usernames.insert(username.clone(), account_id.clone());
                self.accounts.insert(
                    account_id.clone(),
                    Account {
                        account_id: account_id.clone(),
                        username: username.clone(),
                        credentials: credentials.clone(),
                        opening_balance: *balance,
                        balance: *balance,
                        history: Vec::new(),
                    },
                );
            }
            LedgerEvent::IssueTrace { issue_id, account_id, event } => {
                if !self.accounts.contains_key(account_id) {
                    return Err(LedgerError::Missing(account_id.clone()));
                }
                let record = self.issuances.entry(issue_id.clone()).or_insert_with(|| IssuanceRecord {
                    issue_id: issue_id.clone(),
                    account_id: account_id.clone(),
                    card_id: None,
                    events: Vec::new(),
                    outcome: None,
                });
                if record.account_id != *account_id {
                    return Err(reject(format!("{issue_id} belongs to another account")));
                }
                push_event(&mut record.events, event, record.outcome.is_some(), issue_id)?;
                if event.outcome.is_some() {
                    record.outcome = event.outcome;
                }
            }
            LedgerEvent::CardIssued {
                card_id,
                issue_id,
                account_id,
                sealed_pan,
                masked_pan,
                policy,
                issued_at,
                expires_at,
                spent,
            } => {
                if self.cards.contains_key(card_id) {
                    return Err(LedgerError::Exists(card_id.clone()));
                }
                if !self.accounts.contains_key(account_id) {
                    return Err(LedgerError::Missing(account_id.clone()));
                }
                let issuance = self.issuances.get(issue_id).ok_or_else(|| LedgerError::Missing(issue_id.clone()))?;
                if issuance.card_id.is_some() || issuance.outcome.is_some() {
                    return Err(reject(format!("{issue_id} cannot take another card")));
                }
                let pan_bytes = open_card(sealed_pan, storage).map_err(|_| reject("sealed PAN does not open"))?;
                let pan = String::from_utf8(pan_bytes).map_err(|_| reject("sealed PAN is not text"))?;
                let parts = PanParts::parse(&pan).map_err(|e| reject(format!("sealed PAN invalid: {e}")))?;
                if parts.masked() != *masked_pan {
                    return Err(reject("masked PAN disagrees with sealed PAN"));
                }
                if expires_at <= issued_at {
                    return Err(reject("card expires before issue"));
                }
                self.registry.register_unique(&pan).map_err(|e| reject(e.to_string()))?;
                self.issuances.get_mut(issue_id).expect("checked").card_id = Some(card_id.clone());
                self.cards.insert(
                    card_id.clone(),
                    VirtualCard {
                        card_id: card_id.clone(),
                        owner: account_id.clone(),
                        pan: parts,
                        sealed_pan: sealed_pan.clone(),
                        policy: policy.clone(),
                        issued_at: *issued_at,
                        expires_at: *expires_at,
                        state: CardState::Issued,
                        spent: spent.clone(),
                        qr_payload: None,
                    },
                );
            }
            LedgerEvent::CardActivated { card_id, qr_payload } => {
                let card = self.cards.get_mut(card_id).ok_or_else(|| LedgerError::Missing(card_id.clone()))?;
                if card.state != CardState::Issued {
                    return Err(reject(format!("{card_id} is not awaiting activation")));
                }
                card.state = CardState::Active;
                card.qr_payload = Some(qr_payload.clone());
            }
            LedgerEvent::SessionOpened { session_id, token_id, counterparty, amount, opened_at } => {
                if self.sessions.contains_key(session_id) {
                    return Err(LedgerError::Exists(session_id.clone()));
                }
                self.sessions.insert(
                    session_id.clone(),
                    PaymentSession {
                        session_id: session_id.clone(),
                        token_id: token_id.clone(),
                        counterparty: counterparty.clone(),
                        amount: *amount,
                        opened_at: *opened_at,
                        card_id: None,
                        account_id: None,
                        phase: Phase::Step(6),
                        fraud_score: None,
                        events: Vec::new(),
                        outcome: None,
                    },
                );
            }
            LedgerEvent::SessionBound { session_id, card_id, account_id } => {
                let card = self.cards.get(card_id).ok_or_else(|| LedgerError::Missing(card_id.clone()))?;
                if card.owner != *account_id {
                    return Err(reject(format!("{card_id} is not owned by {account_id}")));
                }
                let session =
                    self.sessions.get_mut(session_id).ok_or_else(|| LedgerError::Missing(session_id.clone()))?;
                if session.card_id.is_some() {
                    return Err(reject(format!("{session_id} already bound")));
                }
                session.card_id = Some(card_id.clone());
                session.account_id = Some(account_id.clone());
            }
            LedgerEvent::Trace { session_id, event } => {
                let session =
                    self.sessions.get_mut(session_id).ok_or_else(|| LedgerError::Missing(session_id.clone()))?;
                push_event(&mut session.events, event, session.outcome.is_some(), session_id)?;
                session.phase = event.phase;
                if event.fraud_score.is_some() {
                    session.fraud_score = event.fraud_score;
                }
                if event.outcome.is_some() {
                    session.outcome = event.outcome;
                }
            }
            LedgerEvent::TxnRecorded { account_id, record } => {
                let account =
                    self.accounts.get_mut(account_id).ok_or_else(|| LedgerError::Missing(account_id.clone()))?;
                if account.history.last().is_some_and(|last| last.timestamp > record.timestamp) {
                    return Err(reject("transaction history out of order"));
                }
                account.history.push(record.clone());
            }
            LedgerEvent::Settled { session_id, card_id, account_id, amount, spent_after, retire, record } => {
                let session = self.sessions.get(session_id).ok_or_else(|| LedgerError::Missing(session_id.clone()))?;
                if session.outcome.is_some() || session.card_id.as_deref() != Some(card_id.as_str()) {
                    return Err(reject(format!("{session_id} cannot settle against {card_id}")));
                }
                if session.amount != *amount {
                    return Err(reject("settled amount differs from session amount"));
                }
                let card = self.cards.get(card_id).ok_or_else(|| LedgerError::Missing(card_id.clone()))?;
                if card.state != CardState::Active {
                    return Err(reject(format!("{card_id} is not active")));
                }
                if card.owner != *account_id || spent_after.fingerprint() != card.spent.fingerprint() {
                    return Err(reject("settlement does not match card"));
                }
                let account = self.accounts.get(account_id).ok_or_else(|| LedgerError::Missing(account_id.clone()))?;
                if account.balance < *amount {
                    return Err(reject("settlement would overdraw the account"));
                }
                if account.history.last().is_some_and(|last| last.timestamp > record.timestamp) {
                    return Err(reject("transaction history out of order"));
                }
                let counterparty = session.counterparty.id().to_owned();
                if *retire {
                    self.registry.retire(&card.pan.pan()).map_err(|e| reject(e.to_string()))?;
                }
                let card = self.cards.get_mut(card_id).expect("checked");
                card.spent = spent_after.clone();
                if *retire {
                    card.state = CardState::Retired;
                }
                let account = self.accounts.get_mut(account_id).expect("checked");
                account.balance -= amount;
                account.history.push(record.clone());
                *self.credits.entry(counterparty).or_default() += amount;
            }
        }
        Ok(())
    }

    /// SHA-256 over a canonical rendering of the whole state, hex encoded.
    pub fn digest(&self) -> String {
        #[derive(Serialize)]
        struct CardView<'a> {
            owner: &'a str,
            pan: String,
            policy: &'a CardPolicy,
            issued_at: u64,
            expires_at: u64,
            state: CardState,
            spent: &'a Ciphertext,
            qr_payload: &'a Option<String>,
        }
        #[derive(Serialize)]
        struct AccountView<'a> {
            username: &'a str,
            credentials: &'a CredentialRecord,
            opening_balance: u64,
            balance: u64,
            history: &'a [TxnRecord],
        }
        #[derive(Serialize)]
        struct View<'a> {
            accounts: BTreeMap<&'a str, AccountView<'a>>,
            cards: BTreeMap<&'a str, CardView<'a>>,
            active: Vec<&'a str>,
            retired: Vec<&'a str>,
            sessions: &'a BTreeMap<String, PaymentSession>,
            issuances: &'a BTreeMap<String, IssuanceRecord>,
            credits: &'a BTreeMap<String, u64>,
        }
        let view = View {
            accounts: self
                .accounts
                .iter()
                .map(|(id, a)| {
                    (
                        id.as_str(),
                        AccountView {
                            username: &a.username,
                            credentials: &a.credentials,
                            opening_balance: a.opening_balance,
                            balance: a.balance,
                            history: &a.history,
                        },
                    )
                })
                .collect(),
            cards: self
                .cards
                .iter()
                .map(|(id, c)| {
                    (
                        id.as_str(),
                        CardView {
                            owner: &c.owner,
                            pan: c.pan.pan(),
                            policy: &c.policy,
                            issued_at: c.issued_at,
                            expires_at: c.expires_at,
                            state: c.state,
                            spent: &c.spent,
                            qr_payload: &c.qr_payload,
                        },
                    )
                })
                .collect(),
            active: self.registry.active().collect(),
            retired: self.registry.retired().collect(),
            sessions: &self.sessions,
            issuances: &self.issuances,
            credits: &self.credits,
        };
        let bytes = serde_json::to_vec(&view).expect("state view serializes");
        hex::encode(Sha256::digest(bytes))
    }

    /// Sum of opening balances minus current balances.
    pub fn total_debited(&self) -> u64 {
        self.accounts.values().map(|a| a.opening_balance - a.balance).sum()
    }

    pub fn total_credited(&self) -> u64 {
        self.credits.values().sum()
    }
}
