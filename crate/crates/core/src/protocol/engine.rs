use std::path::Path;
use std::sync::{Arc, Mutex, MutexGuard};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::approval::{ApprovalDecision, ApprovalQuery, ApprovalSource};
use super::ledger::{LedgerEvent, LedgerState};
use super::session::{PaymentSession, SessionEvent};
use super::types::{CardPolicy, CardState, Counterparty, PolicyRequest, Usage};
use super::{Actor, DeclineReason, Outcome, Phase, ProtocolError};
use crate::card_numbering::{assemble_pan, generate_account_id, PanParts, DEFAULT_MAX_ATTEMPTS};
use crate::clock::Clock;
use crate::crypto::{derive_key, open_card, seal_card, HeKeyPair, SealError, SealKey, SealedCard};
use crate::entropy::{random_array, BoxRng, EntropyMode};
use crate::fraud::{extract_features, verdict_for, CandidateTxn, FraudError, FraudScorer, TxnRecord, Verdict};
use crate::gateway::auth::{verify_user, CredentialRecord, Credentials, Verification, DEFAULT_ITERATIONS};
use crate::gateway::event_log::{replay, EventLog};
use crate::token::{decode_token, encode_token, qr_payload, NetworkKey, TokenError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BankConfig {
    pub iin: String,
    pub network_id: u8,
    pub he_bits: usize,
    pub password_iterations: u32,
    pub approval_timeout: Duration,
    pub max_attempts: usize,
}

impl Default for BankConfig {
    fn default() -> Self {
        Self {
            iin: "444433".into(),
            network_id: 7,
            he_bits: crate::crypto::paillier::DEFAULT_MODULUS_BITS,
            password_iterations: DEFAULT_ITERATIONS,
            approval_timeout: Duration::from_secs(120),
            max_attempts: DEFAULT_MAX_ATTEMPTS,
        }
    }
}

/// Key material held by the bank and, for the token keys, the network.
#[derive(Clone)]
pub struct BankKeys {
    pub he: HeKeyPair,
    pub storage: SealKey,
    delivery_master: [u8; 32],
    network: NetworkKey,
}

impl std::fmt::Debug for BankKeys {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("BankKeys").field("he", &self.he).field("network", &self.network).finish_non_exhaustive()
    }
}

impl BankKeys {
    pub fn generate(cfg: &BankConfig, rng: &mut (impl rand::RngCore + ?Sized)) -> Result<Self, ProtocolError> {
        let he = HeKeyPair::generate(cfg.he_bits, rng)?;
        let storage = SealKey::random(rng);
        let delivery_master = random_array(rng);
        let network = NetworkKey::new(cfg.network_id, random_array(rng));
        Ok(Self { he, storage, delivery_master, network })
    }

    /// The key a given account's wallet uses to open delivered cards.
    pub fn delivery_key(&self, account_id: &str) -> SealKey {
        SealKey::new(derive_key(&self.delivery_master, &format!("cardless/delivery/{account_id}")))
    }

    pub fn network(&self) -> &NetworkKey {
        &self.network
    }
}

/// The card as the cardholder's wallet sees it after unsealing.
#[derive(Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CardPayload {
    pub card_id: String,
    pub pan: String,
    pub usage: Usage,
    pub limit_minor_units: u64,
    pub expires_at: u64,
}

impl std::fmt::Debug for CardPayload {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CardPayload")
            .field("card_id", &self.card_id)
            .field("pan", &crate::card_numbering::mask_pan(&self.pan))
            .field("usage", &self.usage)
            .field("limit_minor_units", &self.limit_minor_units)
            .field("expires_at", &self.expires_at)
            .finish()
    }
}

impl CardPayload {
    pub fn open(sealed: &SealedCard, key: &SealKey) -> Result<Self, SealError> {
        let bytes = open_card(sealed, key)?;
        serde_json::from_slice(&bytes).map_err(|_| SealError::Format("card payload is not valid JSON"))
    }
}

/// What the user receives at the end of a successful card request.
#[derive(Debug, Clone, PartialEq)]
pub struct IssuedCard {
    pub issue_id: String,
    pub card_id: String,
    pub account_id: String,
    pub masked_pan: String,
    pub sealed_card: SealedCard,
    pub token: Vec<u8>,
    pub qr_payload: String,
    pub policy: CardPolicy,
    pub expires_at: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CardSummary {
    pub card_id: String,
    pub masked_pan: String,
    pub usage: Usage,
    pub limit: u64,
    pub spent: u64,
    pub state: CardState,
    pub expires_at: u64,
    pub qr_payload: Option<String>,
}

/// The bank together with the card network it works with.
pub struct Bank {
    cfg: BankConfig,
    keys: BankKeys,
    state: Mutex<LedgerState>,
    log: Arc<EventLog>,
    rng: Mutex<BoxRng>,
    clock: Arc<dyn Clock>,
}

impl std::fmt::Debug for Bank {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Bank").field("cfg", &self.cfg).field("log", &self.log).finish_non_exhaustive()
    }
}

fn counterparty_actor(c: &Counterparty) -> Actor {
    match c {
        Counterparty::Atm { .. } => Actor::Atm,
        _ => Actor::Merchant,
    }
}

fn token_decline(e: &TokenError) -> DeclineReason {
    match e {
        TokenError::Authenticity => DeclineReason::TokenAuthenticity,
        TokenError::Expired => DeclineReason::TokenExpired,
        _ => DeclineReason::MalformedToken,
    }
}

impl Bank {
    pub fn new(
        cfg: BankConfig,
        entropy: EntropyMode,
        clock: Arc<dyn Clock>,
        log: Arc<EventLog>,
    ) -> Result<Self, ProtocolError> {
        let mut rng = entropy.rng();
        let keys = BankKeys::generate(&cfg, &mut rng)?;
        Ok(Self::from_parts(cfg, keys, LedgerState::new(), rng, clock, log))
    }

    pub fn from_parts(
        cfg: BankConfig,
        keys: BankKeys,
        state: LedgerState,
        rng: BoxRng,
        clock: Arc<dyn Clock>,
        log: Arc<EventLog>,
    ) -> Self {
        Self { cfg, keys, state: Mutex::new(state), log, rng: Mutex::new(rng), clock }
    }

    /// Rebuilds a bank from an existing log file and keeps appending to it.
    /// Keys are regenerated from `entropy`, so this only works with the seed
    /// that produced the log.
    pub fn restore(
        cfg: BankConfig,
        entropy: EntropyMode,
        clock: Arc<dyn Clock>,
        path: impl AsRef<Path>,
    ) -> Result<Self, ProtocolError> {
        let mut rng = entropy.rng();
        let keys = BankKeys::generate(&cfg, &mut rng)?;
        let (log, records) = EventLog::open_append(path)?;
        let state = replay(&records, &keys.storage)?;
        Ok(Self::from_parts(cfg, keys, state, rng, clock, Arc::new(log)))
    }

    pub fn config(&self) -> &BankConfig {
        &self.cfg
    }

    pub fn keys(&self) -> &BankKeys {
        &self.keys
    }

    pub fn log(&self) -> &Arc<EventLog> {
        &self.log
    }

    pub fn now(&self) -> u64 {
        self.clock.now()
    }

    fn lock(&self) -> MutexGuard<'_, LedgerState> {
        self.state.lock().unwrap_or_else(|e| e.into_inner())
    }

    fn rng(&self) -> MutexGuard<'_, BoxRng> {
        self.rng.lock().unwrap_or_else(|e| e.into_inner())
    }

    /// Applies then persists. Callers hold the state lock, so log order and
    /// apply order agree.
    fn commit(&self, st: &mut LedgerState, ts: u64, event: LedgerEvent) -> Result<(), ProtocolError> {
        st.apply(&event, &self.keys.storage)?;
        self.log.append(ts, &event)?;
        Ok(())
    }

    pub fn snapshot(&self) -> LedgerState {
        self.lock().clone()
    }

    pub fn state_digest(&self) -> String {
        self.lock().digest()
    }

    pub fn session(&self, session_id: &str) -> Option<PaymentSession> {
        self.lock().sessions.get(session_id).cloned()
    }

    pub fn account_id_for(&self, username: &str) -> Option<String> {
        self.lock().usernames.get(username).cloned()
    }

    pub fn balance(&self, account_id: &str) -> Option<u64> {
        self.lock().accounts.get(account_id).map(|a| a.balance)
    }

    pub fn spent(&self, card_id: &str) -> Result<u64, ProtocolError> {
        let c = self.lock().cards.get(card_id).map(|c| c.spent.clone());
        let c = c.ok_or_else(|| ProtocolError::UnknownAccount(card_id.to_owned()))?;
        Ok(self.keys.he.secret_key.decrypt_u64(&c)?)
    }

    pub fn cards_for(&self, account_id: &str) -> Result<Vec<CardSummary>, ProtocolError> {
        let cards: Vec<_> = self.lock().cards.values().filter(|c| c.owner == account_id).cloned().collect();
        cards
            .into_iter()
            .map(|c| {
                Ok(CardSummary {
                    masked_pan: c.pan.masked(),
                    usage: c.policy.usage,
                    limit: c.policy.limit_minor_units,
                    spent: self.keys.he.secret_key.decrypt_u64(&c.spent)?,
                    state: c.state,
                    expires_at: c.expires_at,
                    qr_payload: c.qr_payload,
                    card_id: c.card_id,
                })
            })
            .collect()
    }

    pub fn open_account(&self, username: &str, password: &str, pin: &str, balance: u64) -> Result<String, ProtocolError> {
        let mut st = self.lock();
        if st.usernames.contains_key(username) {
            return Err(ProtocolError::DuplicateUsername);
        }
        let credentials =
            CredentialRecord::create(username, password, pin, self.cfg.password_iterations, &mut **self.rng())?;
        let account_id = st.next_account_id();
        let event = LedgerEvent::AccountOpened {
            account_id: account_id.clone(),
            username: username.to_owned(),
            credentials,
            balance,
        };
        self.commit(&mut st, self.clock.now(), event)?;
        Ok(account_id)
    }

    /// Checks a username and password; every failure looks the same.
    pub fn authenticate(&self, creds: &Credentials) -> Result<String, ProtocolError> {
        let stored = self.lock().account_by_username(&creds.username).map(|a| (a.account_id.clone(), a.credentials.clone()));
        match verify_user(creds, stored.as_ref().map(|(_, r)| r)) {
            Verification::Verified => Ok(stored.expect("verified implies stored").0),
            Verification::Rejected => Err(ProtocolError::Authentication),
        }
    }

    pub fn verify_pin(&self, account_id: &str, pin: &str) -> bool {
        let record = self.lock().accounts.get(account_id).map(|a| a.credentials.clone());
        record.is_some_and(|r| r.verify_pin(pin) == Verification::Verified)
    }

    pub fn request_card(&self, creds: &Credentials, request: &PolicyRequest) -> Result<IssuedCard, ProtocolError> {
        let account_id = self.authenticate(creds)?;
        self.request_card_for(&account_id, request)
    }

    /// Issues a card for an already authenticated account.
    pub fn request_card_for(&self, account_id: &str, request: &PolicyRequest) -> Result<IssuedCard, ProtocolError> {
        let mut st = self.lock();
        if !st.accounts.contains_key(account_id) {
            return Err(ProtocolError::UnknownAccount(account_id.to_owned()));
        }
        let now = self.clock.now();
        let issue_id = st.next_issue_id();
        let trace = |event: SessionEvent| LedgerEvent::IssueTrace {
            issue_id: issue_id.clone(),
            account_id: account_id.to_owned(),
            event,
        };
        let show = |v: Option<u64>| v.map_or("-".to_string(), |v| v.to_string());

        self.commit(
            &mut st,
            now,
            trace(
                SessionEvent::new(now, Actor::User, Phase::Step(1))
                    .with("usage", request.usage.map_or("-".to_string(), |u| format!("{u:?}")))
                    .with("limit", show(request.limit))
                    .with("valid_for", show(request.valid_for)),
            ),
        )?;
        let fail = |st: &mut LedgerState, actor: Actor, reason: String| -> Result<IssuedCard, ProtocolError> {
            self.commit(
                st,
                now,
                trace(SessionEvent::terminal(now, actor, Outcome::CardGenerateFailed).with("reason", &reason)),
            )?;
            Err(ProtocolError::CardGenerateFailed { issue_id: issue_id.clone(), reason })
        };
        let policy = match request.validate(self.cfg.network_id) {
            Ok(p) => p,
            Err(reason) => return fail(&mut st, Actor::Bank, reason.to_owned()),
        };
        self.commit(
            &mut st,
            now,
            trace(SessionEvent::new(now, Actor::Bank, Phase::Step(2)).with("request", "generate").with("iin", &self.cfg.iin)),
        )?;

        let mut rng = self.rng();
        let mut parts: Option<PanParts> = None;
        for _ in 0..self.cfg.max_attempts {
            let candidate = assemble_pan(&self.cfg.iin, &generate_account_id(&mut **rng))
                .map_err(|e| ProtocolError::CardGenerateFailed { issue_id: issue_id.clone(), reason: e.to_string() })?;
            let pan = candidate.pan();
            if !st.registry.is_active(&pan) && !st.registry.is_retired(&pan) {
                parts = Some(candidate);
                break;
            }
        }
        let Some(parts) = parts else {
            drop(rng);
            return fail(&mut st, Actor::Network, format!("no free number after {} attempts", self.cfg.max_attempts));
        };
        self.commit(
            &mut st,
            now,
            trace(SessionEvent::new(now, Actor::Network, Phase::Step(3)).with("masked_pan", parts.masked())),
        )?;

        let card_id = st.next_card_id();
        let expires_at = now.saturating_add(policy.valid_for);
        let sealed_pan = seal_card(parts.pan().as_bytes(), &self.keys.storage, &mut **rng);
        let spent = self.keys.he.public_key.encrypt_u64(0, &mut **rng)?;
        let payload = CardPayload {
            card_id: card_id.clone(),
            pan: parts.pan(),
            usage: policy.usage,
            limit_minor_units: policy.limit_minor_units,
            expires_at,
        };
        let payload_bytes = serde_json::to_vec(&payload).expect("payload serializes");
        let sealed_card = seal_card(&payload_bytes, &self.keys.delivery_key(account_id), &mut **rng);
        let token = match encode_token(card_id.as_bytes(), &self.keys.network, expires_at, now, &mut **rng) {
            Ok(t) => t,
            Err(e) => {
                drop(rng);
                return fail(&mut st, Actor::Network, e.to_string());
            }
        };
        drop(rng);

        self.commit(
            &mut st,
            now,
            LedgerEvent::CardIssued {
                card_id: card_id.clone(),
                issue_id: issue_id.clone(),
                account_id: account_id.to_owned(),
                sealed_pan,
                masked_pan: parts.masked(),
                policy: policy.clone(),
                issued_at: now,
                expires_at,
                spent,
            },
        )?;
        self.commit(
            &mut st,
            now,
            trace(
                SessionEvent::new(now, Actor::Bank, Phase::Step(4))
                    .with("card_id", &card_id)
                    .with("sealed_bytes", sealed_card.encoded_len()),
            ),
        )?;
        let qr = qr_payload(&token);
        self.commit(&mut st, now, LedgerEvent::CardActivated { card_id: card_id.clone(), qr_payload: qr.clone() })?;
        self.commit(
            &mut st,
            now,
            trace(SessionEvent::new(now, Actor::Bank, Phase::Step(5)).with("delivered", &card_id)),
        )?;

        Ok(IssuedCard {
            issue_id,
            card_id,
            account_id: account_id.to_owned(),
            masked_pan: parts.masked(),
            sealed_card,
            token,
            qr_payload: qr,
            policy,
            expires_at,
        })
    }

    /// The counterparty forwards a presented token; the network checks it
    /// and, if it is good, asks the bank for funds.
    pub fn present_card(&self, token: &[u8], counterparty: &Counterparty, amount: u64) -> Result<PaymentSession, ProtocolError> {
        if amount == 0 {
            return Err(ProtocolError::InvalidAmount);
        }
        let mut st = self.lock();
        let now = self.clock.now();
        let session_id = st.next_session_id();
        let decoded = decode_token(token, &self.keys.network, now);
        let token_id = decoded.as_ref().ok().map(|t| t.token_id_hex());

        self.commit(
            &mut st,
            now,
            LedgerEvent::SessionOpened {
                session_id: session_id.clone(),
                token_id: token_id.clone(),
                counterparty: counterparty.clone(),
                amount,
                opened_at: now,
            },
        )?;
        let trace = |event: SessionEvent| LedgerEvent::Trace { session_id: session_id.clone(), event };
        self.commit(
            &mut st,
            now,
            trace(
                SessionEvent::new(now, counterparty_actor(counterparty), Phase::Step(6))
                    .with("token_id", token_id.as_deref().unwrap_or("-"))
                    .with("amount", amount)
                    .with("counterparty", counterparty.id()),
            ),
        )?;

        let resolved = decoded.map_err(|e| token_decline(&e)).and_then(|tok| {
            let card_id = tok
                .open_reference(&self.keys.network)
                .ok()
                .and_then(|r| String::from_utf8(r).ok())
                .ok_or(DeclineReason::TokenAuthenticity)?;
            let card = st.cards.get(&card_id).ok_or(DeclineReason::UnknownCard)?;
            match card.state {
                CardState::Retired => return Err(DeclineReason::CardRetired),
                CardState::Issued => return Err(DeclineReason::CardNotActive),
                CardState::Active => {}
            }
            if !card.policy.networks_allowed.contains(&tok.network_id) {
                return Err(DeclineReason::NetworkNotAllowed);
            }
            if now >= card.expires_at {
                return Err(DeclineReason::TokenExpired);
            }
            Ok((card_id, card.owner.clone()))
        });

        match resolved {
            Err(reason) => {
                self.commit(
                    &mut st,
                    now,
                    trace(SessionEvent::new(now, Actor::Network, Phase::Step(7)).with("token", reason.as_str())),
                )?;
                self.commit(&mut st, now, trace(SessionEvent::terminal(now, Actor::Network, Outcome::Declined(reason))))?;
            }
            Ok((card_id, account_id)) => {
                self.commit(
                    &mut st,
                    now,
                    LedgerEvent::SessionBound { session_id: session_id.clone(), card_id, account_id },
                )?;
                self.commit(
                    &mut st,
                    now,
                    trace(
                        SessionEvent::new(now, Actor::Network, Phase::Step(7))
                            .with("token", "authentic")
                            .with("request", "funds"),
                    ),
                )?;
            }
        }
        Ok(st.sessions[&session_id].clone())
    }

    /// Records a refused attempt in the account history and closes the
    /// session with `outcome`.
    fn close_declined(
        &self,
        st: &mut LedgerState,
        session_id: &str,
        event: SessionEvent,
    ) -> Result<PaymentSession, ProtocolError> {
        let session = st.sessions[session_id].clone();
        if let Some(account_id) = &session.account_id {
            let record = self.history_record(st, account_id, &session, event.ts, false);
            self.commit(st, event.ts, LedgerEvent::TxnRecorded { account_id: account_id.clone(), record })?;
        }
        self.commit(st, event.ts, LedgerEvent::Trace { session_id: session_id.to_owned(), event })?;
        Ok(st.sessions[session_id].clone())
    }

    fn history_record(&self, st: &LedgerState, account_id: &str, s: &PaymentSession, now: u64, approved: bool) -> TxnRecord {
        let last = st.accounts[account_id].history.last().map_or(0, |r| r.timestamp);
        TxnRecord {
            timestamp: now.max(last),
            amount: s.amount,
            category: s.counterparty.category().to_owned(),
            channel: s.counterparty.channel(),
            approved,
        }
    }

    fn pending_session(st: &LedgerState, session_id: &str, phase: Phase) -> Result<PaymentSession, ProtocolError> {
        let s = st.sessions.get(session_id).ok_or_else(|| ProtocolError::UnknownSession(session_id.to_owned()))?;
        if s.outcome.is_some() {
            return Err(ProtocolError::InvalidState { session_id: session_id.to_owned(), reason: "already finished" });
        }
        if s.phase != phase || s.card_id.is_none() {
            return Err(ProtocolError::InvalidState { session_id: session_id.to_owned(), reason: "wrong phase" });
        }
        Ok(s.clone())
    }

    /// Fraud score, then funds, then the cardholder's approval. Approved
    /// sessions go on to [`Bank::settle`].
    pub fn adjudicate(
        &self,
        session_id: &str,
        scorer: Option<&dyn FraudScorer>,
        approval: &dyn ApprovalSource,
    ) -> Result<PaymentSession, ProtocolError> {
        let query = {
            let mut st = self.lock();
            let session = Self::pending_session(&st, session_id, Phase::Step(7))?;
            let card = st.cards[session.card_id.as_deref().expect("bound")].clone();
            let account = st.accounts[&card.owner].clone();
            let last = account.history.last().map_or(0, |r| r.timestamp);
            let now = self.clock.now().max(last);

            let candidate = CandidateTxn {
                timestamp: now,
                amount: session.amount,
                category: session.counterparty.category().to_owned(),
                channel: session.counterparty.channel(),
            };
            let scored = scorer.ok_or(FraudError::Unavailable).and_then(|s| {
                let x = extract_features(&account.history, &candidate)?;
                Ok((s.score(&x)?, s.threshold()))
            });
            let (p, threshold) = match scored {
                Ok(v) => v,
                Err(e) => {
                    let ev = SessionEvent::terminal(now, Actor::Bank, Outcome::FraudDetectionFailed)
                        .with("fraud_check", e.to_string());
                    return self.close_declined(&mut st, session_id, ev);
                }
            };
            if verdict_for(p, threshold) == Verdict::Fraud {
                let mut ev = SessionEvent::terminal(now, Actor::Bank, Outcome::Fraudulent).with("fraud_score", p);
                ev.fraud_score = Some(p);
                return self.close_declined(&mut st, session_id, ev);
            }

            let spent = self.keys.he.secret_key.decrypt_u64(&card.spent)?;
            let within_limit = spent.checked_add(session.amount).is_some_and(|t| t <= card.policy.limit_minor_units);
            if !within_limit || session.amount > account.balance {
                let mut ev = SessionEvent::terminal(now, Actor::Bank, Outcome::Declined(DeclineReason::InsufficientFunds))
                    .with("fraud_score", p)
                    .with("funds", "insufficient");
                ev.fraud_score = Some(p);
                return self.close_declined(&mut st, session_id, ev);
            }

            let mut ev = SessionEvent::new(now, Actor::Bank, Phase::Step(8))
                .with("fraud_score", p)
                .with("funds", "ok")
                .with("approval", "requested");
            ev.fraud_score = Some(p);
            self.commit(&mut st, now, LedgerEvent::Trace { session_id: session_id.to_owned(), event: ev })?;
            ApprovalQuery {
                session_id: session_id.to_owned(),
                account_id: account.account_id.clone(),
                counterparty: session.counterparty.clone(),
                amount: session.amount,
                requested_at: now,
            }
        };

        // The lock is released while the cardholder decides.
        let decision = approval.request(&query, self.cfg.approval_timeout);

        let mut st = self.lock();
        Self::pending_session(&st, session_id, Phase::Step(8))?;
        let now = self.clock.now().max(st.sessions[session_id].events.last().map_or(0, |e| e.ts));
        match decision {
            ApprovalDecision::Approve => {
                self.commit(
                    &mut st,
                    now,
                    LedgerEvent::Trace {
                        session_id: session_id.to_owned(),
                        event: SessionEvent::new(now, Actor::User, Phase::Step(9)).with("decision", "approved"),
                    },
                )?;
                drop(st);
                self.settle(session_id)
            }
            ApprovalDecision::Decline | ApprovalDecision::Timeout => {
                let label = if decision == ApprovalDecision::Decline { "declined" } else { "timeout" };
                let ev = SessionEvent::terminal(now, Actor::User, Outcome::UserApprovalFailed).with("decision", label);
                self.close_declined(&mut st, session_id, ev)
            }
        }
    }

    /// Moves the money. Card state and funds are checked again under the lock
    /// because other sessions may have settled while this one waited.
    pub fn settle(&self, session_id: &str) -> Result<PaymentSession, ProtocolError> {
        let mut st = self.lock();
        let session = Self::pending_session(&st, session_id, Phase::Step(9))?;
        let card = st.cards[session.card_id.as_deref().expect("bound")].clone();
        let account_id = card.owner.clone();
        let now = self.clock.now().max(session.events.last().map_or(0, |e| e.ts));

        let refuse = |st: &mut LedgerState, reason: DeclineReason| {
            let ev = SessionEvent::terminal(now, Actor::Bank, Outcome::Declined(reason)).with("settle", reason.as_str());
            self.close_declined(st, session_id, ev)
        };
        match card.state {
            CardState::Active => {}
            CardState::Retired => return refuse(&mut st, DeclineReason::CardRetired),
            CardState::Issued => return refuse(&mut st, DeclineReason::CardNotActive),
        }
        let spent = self.keys.he.secret_key.decrypt_u64(&card.spent)?;
        let within_limit = spent.checked_add(session.amount).is_some_and(|t| t <= card.policy.limit_minor_units);
        if !within_limit || session.amount > st.accounts[&account_id].balance {
            return refuse(&mut st, DeclineReason::InsufficientFunds);
        }

        let increment = self.keys.he.public_key.encrypt_u64(session.amount, &mut **self.rng())?;
        let spent_after = self.keys.he.public_key.add(&card.spent, &increment)?;
        let record = self.history_record(&st, &account_id, &session, now, true);
        self.commit(
            &mut st,
            now,
            LedgerEvent::Settled {
                session_id: session_id.to_owned(),
                card_id: card.card_id.clone(),
                account_id,
                amount: session.amount,
                spent_after,
                retire: card.policy.usage == Usage::OneTime,
                record,
            },
        )?;
        let trace = |event: SessionEvent| LedgerEvent::Trace { session_id: session_id.to_owned(), event };
        self.commit(
            &mut st,
            now,
            trace(
                SessionEvent::new(now, Actor::Network, Phase::Step(10))
                    .with("payment", "confirmed")
                    .with("amount", session.amount)
                    .with("counterparty", session.counterparty.id()),
            ),
        )?;
        self.commit(
            &mut st,
            now,
            trace(SessionEvent::new(now, Actor::Bank, Phase::Step(11)).with("notified", "user").with("amount", session.amount)),
        )?;
        self.commit(&mut st, now, trace(SessionEvent::terminal(now, Actor::Bank, Outcome::Completed)))?;
        Ok(st.sessions[session_id].clone())
    }

    /// Presentation followed by adjudication when the token was accepted.
    pub fn process(
        &self,
        token: &[u8],
        counterparty: &Counterparty,
        amount: u64,
        scorer: Option<&dyn FraudScorer>,
        approval: &dyn ApprovalSource,
    ) -> Result<PaymentSession, ProtocolError> {
        let session = self.present_card(token, counterparty, amount)?;
        if session.is_pending() {
            self.adjudicate(&session.session_id, scorer, approval)
        } else {
            Ok(session)
        }
    }
}
