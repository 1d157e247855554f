use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::card_numbering::PanParts;
use crate::crypto::{Ciphertext, SealedCard};
use crate::fraud::{Channel, TxnRecord};
use crate::gateway::auth::CredentialRecord;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Usage {
    OneTime,
    MultiUse,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CardPolicy {
    pub usage: Usage,
    pub limit_minor_units: u64,
    pub valid_for: u64,
    pub networks_allowed: BTreeSet<u8>,
}

/// A card request as the user filled it in. Every field is optional so an
/// incomplete form can reach the bank and be refused there.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PolicyRequest {
    #[serde(default)]
    pub usage: Option<Usage>,
    #[serde(default)]
    pub limit: Option<u64>,
    #[serde(default)]
    pub valid_for: Option<u64>,
    #[serde(default)]
    pub networks: Option<Vec<u8>>,
}

impl PolicyRequest {
    pub fn new(usage: Usage, limit: u64, valid_for: u64) -> Self {
        Self { usage: Some(usage), limit: Some(limit), valid_for: Some(valid_for), networks: None }
    }

    pub fn is_empty(&self) -> bool {
        *self == Self::default()
    }

    /// Fills in the default network and checks every field.
    pub fn validate(&self, default_network: u8) -> Result<CardPolicy, &'static str> {
        if self.is_empty() {
            return Err("empty policy");
        }
        let usage = self.usage.ok_or("usage missing")?;
        let limit = self.limit.ok_or("limit missing")?;
        let valid_for = self.valid_for.ok_or("validity missing")?;
        if limit == 0 {
            return Err("limit must be positive");
        }
        if valid_for == 0 {
            return Err("validity must be positive");
        }
        let networks_allowed: BTreeSet<u8> = match &self.networks {
            Some(n) if n.is_empty() => return Err("no network allowed"),
            Some(n) => n.iter().copied().collect(),
            None => [default_network].into(),
        };
        Ok(CardPolicy { usage, limit_minor_units: limit, valid_for, networks_allowed })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CardState {
    Issued,
    Active,
    Retired,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Counterparty {
    Merchant { id: String, category: String },
    Atm { id: String },
    Transfer { id: String },
}

impl Counterparty {
    pub fn merchant(id: impl Into<String>, category: impl Into<String>) -> Self {
        Self::Merchant { id: id.into(), category: category.into() }
    }

    pub fn atm(id: impl Into<String>) -> Self {
        Self::Atm { id: id.into() }
    }

    pub fn id(&self) -> &str {
        match self {
            Self::Merchant { id, .. } | Self::Atm { id } | Self::Transfer { id } => id,
        }
    }

    pub fn category(&self) -> &str {
        match self {
            Self::Merchant { category, .. } => category,
            Self::Atm { .. } => "atm",
            Self::Transfer { .. } => "transfer",
        }
    }

    pub fn channel(&self) -> Channel {
        match self {
            Self::Merchant { .. } => Channel::Merchant,
            Self::Atm { .. } => Channel::Atm,
            Self::Transfer { .. } => Channel::Transfer,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VirtualCard {
    pub card_id: String,
    pub owner: String,
    pub pan: PanParts,
    /// The PAN sealed under the bank's storage key, as it appears in the log.
    pub sealed_pan: SealedCard,
    pub policy: CardPolicy,
    pub issued_at: u64,
    pub expires_at: u64,
    pub state: CardState,
    pub spent: Ciphertext,
    pub qr_payload: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Account {
    pub account_id: String,
    pub username: String,
    pub credentials: CredentialRecord,
    pub opening_balance: u64,
    pub balance: u64,
    pub history: Vec<TxnRecord>,
}
