//! The payment protocol: card issuance, presentation, adjudication and
//! settlement between the user, bank, card network and counterparty.
//!
//! Every state change is a [`LedgerEvent`]. The engine applies it to the
//! in-memory [`LedgerState`] and appends it to the event log, so replaying a
//! log goes through the same `apply` as the live run.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub mod approval;
pub mod engine;
pub mod ledger;
pub mod session;
pub mod types;

pub use approval::{AlwaysApprove, ApprovalDecision, ApprovalQuery, ApprovalSource, FixedDecision};
pub use engine::{Bank, BankConfig, BankKeys, CardPayload, IssuedCard};
pub use ledger::{LedgerError, LedgerEvent, LedgerState};
pub use session::{CounterpartyNotice, IssuanceRecord, PaymentSession, SessionEvent};
pub use types::{Account, CardPolicy, CardState, Counterparty, PolicyRequest, Usage, VirtualCard};

use crate::crypto::HeError;
use crate::gateway::auth::CredentialError;

/// Why a payment was refused before reaching one of the adjudication outcomes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum DeclineReason {
    MalformedToken,
    TokenAuthenticity,
    TokenExpired,
    UnknownCard,
    CardRetired,
    CardNotActive,
    NetworkNotAllowed,
    InsufficientFunds,
}

impl DeclineReason {
    pub const ALL: [DeclineReason; 8] = [
        Self::MalformedToken,
        Self::TokenAuthenticity,
        Self::TokenExpired,
        Self::UnknownCard,
        Self::CardRetired,
        Self::CardNotActive,
        Self::NetworkNotAllowed,
        Self::InsufficientFunds,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::MalformedToken => "malformed token",
            Self::TokenAuthenticity => "token failed authentication",
            Self::TokenExpired => "token expired",
            Self::UnknownCard => "unknown card",
            Self::CardRetired => "card retired",
            Self::CardNotActive => "card not active",
            Self::NetworkNotAllowed => "network not allowed",
            Self::InsufficientFunds => "insufficient funds",
        }
    }
}

/// How a payment session or card request ends.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Outcome {
    Completed,
    UserApprovalFailed,
    Fraudulent,
    FraudDetectionFailed,
    CardGenerateFailed,
    Declined(DeclineReason),
}

impl Outcome {
    /// The five terminal messages, in a fixed order.
    pub const TERMINAL: [Outcome; 5] = [
        Self::Completed,
        Self::UserApprovalFailed,
        Self::Fraudulent,
        Self::FraudDetectionFailed,
        Self::CardGenerateFailed,
    ];

    pub fn message(self) -> String {
        match self {
            Self::Completed => "Payment completed successfully!".into(),
            Self::UserApprovalFailed => "User approval failed!".into(),
            Self::Fraudulent => "Fraudulent transaction!".into(),
            Self::FraudDetectionFailed => "Fraud detection failed!".into(),
            Self::CardGenerateFailed => "Virtual card generate failed!".into(),
            Self::Declined(r) => format!("Declined: {}", r.as_str()),
        }
    }

    pub fn is_declined(self) -> bool {
        matches!(self, Self::Declined(_))
    }
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message())
    }
}

impl FromStr for Outcome {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::TERMINAL
            .into_iter()
            .chain(DeclineReason::ALL.map(Self::Declined))
            .find(|o| o.message() == s)
            .ok_or_else(|| format!("unknown outcome {s:?}"))
    }
}

impl Serialize for Outcome {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.message())
    }
}

impl<'de> Deserialize<'de> for Outcome {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }
}

/// A numbered protocol step, or the terminal event that closes a session.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Phase {
    Step(u8),
    Terminal,
}

impl Phase {
    pub fn number(self) -> Option<u8> {
        match self {
            Self::Step(n) => Some(n),
            Self::Terminal => None,
        }
    }
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Step(n) => write!(f, "{n}"),
            Self::Terminal => f.write_str("terminal"),
        }
    }
}

impl Serialize for Phase {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Self::Step(n) => s.serialize_u8(*n),
            Self::Terminal => s.serialize_str("terminal"),
        }
    }
}

impl<'de> Deserialize<'de> for Phase {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(u8),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(n) if (1..=11).contains(&n) => Ok(Self::Step(n)),
            Raw::Text(t) if t == "terminal" => Ok(Self::Terminal),
            _ => Err(serde::de::Error::custom("phase must be 1..=11 or \"terminal\"")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Actor {
    User,
    Bank,
    Network,
    Merchant,
    Atm,
}

#[derive(Debug, Error)]
pub enum ProtocolError {
    #[error("authentication failed")]
    Authentication,
    #[error("unknown account {0}")]
    UnknownAccount(String),
    #[error("unknown session {0}")]
    UnknownSession(String),
    #[error("username already taken")]
    DuplicateUsername,
    #[error(transparent)]
    Credential(#[from] CredentialError),
    #[error("amount must be positive")]
    InvalidAmount,
    #[error("session {session_id}: {reason}")]
    InvalidState { session_id: String, reason: &'static str },
    #[error("{issue_id}: Virtual card generate failed! ({reason})")]
    CardGenerateFailed { issue_id: String, reason: String },
    #[error(transparent)]
    Crypto(#[from] HeError),
    #[error(transparent)]
    Ledger(#[from] LedgerError),
    #[error("event log write failed: {0}")]
    Persist(#[from] std::io::Error),
    #[error(transparent)]
    Replay(#[from] crate::gateway::event_log::ReplayError),
}
