//! Scenario files (TOML).
//!
//! ```toml
//! seed = 7
//! he_bits = 256
//!
//! [model]
//! kind = "constant"        # constant | unavailable | trained | file
//! score = 0.1
//!
//! [[accounts]]
//! name = "alice"
//! password = "alice-password"
//! pin = "123456"
//! balance = 100000
//!
//! [[cards]]
//! name = "groceries"
//! account = "alice"
//! usage = "one_time"       # all policy fields optional; an empty policy fails
//! limit = 10000
//! valid_for = 86400
//!
//! [[traffic]]
//! card = "groceries"
//! at = 60                  # seconds after start_time
//! amount = 2500
//! counterparty = { kind = "merchant", id = "m-1", category = "grocery" }
//! label = "legit"
//! approval = "approve"     # overrides [approval_policy]
//!
//! [approval_policy]
//! default = "approve"
//! rules = [{ min_amount = 50000, decision = "decline" }]
//! ```

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::Deserialize;
use thiserror::Error;

use crate::fraud::{ClassWeight, Label};
use crate::protocol::{ApprovalDecision, Counterparty, PolicyRequest, Usage};

pub const DEFAULT_START: u64 = 1_700_000_000;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("{}:{line}: {message}", path.display())]
    Parse { path: PathBuf, line: usize, message: String },
    #[error("{}: {reason}", path.display())]
    Invalid { path: PathBuf, reason: String },
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(default)]
    pub name: Option<String>,
    pub seed: u64,
    #[serde(default = "default_iin")]
    pub iin: String,
    #[serde(default = "default_network")]
    pub network_id: u8,
    #[serde(default = "default_he_bits")]
    pub he_bits: usize,
    #[serde(default = "default_iterations")]
    pub password_iterations: u32,
    #[serde(default = "default_start")]
    pub start_time: u64,
    pub model: ModelSpec,
    #[serde(default)]
    pub accounts: Vec<AccountSpec>,
    #[serde(default)]
    pub cards: Vec<CardSpec>,
    #[serde(default)]
    pub traffic: Vec<TrafficSpec>,
    #[serde(default)]
    pub approval_policy: ApprovalPolicy,
    #[serde(default)]
    pub generate: Option<GenerateSpec>,
}

fn default_iin() -> String {
    "444433".into()
}
fn default_network() -> u8 {
    7
}
fn default_he_bits() -> usize {
    256
}
fn default_iterations() -> u32 {
    1_000
}
fn default_start() -> u64 {
    DEFAULT_START
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum ModelSpec {
    Constant {
        score: f64,
    },
    Unavailable,
    /// Trains on generated data before the run.
    Trained {
        separation: f64,
        #[serde(default = "default_train_n")]
        n: usize,
        #[serde(default = "default_fraud_rate")]
        fraud_rate: f64,
        #[serde(default)]
        seed: Option<u64>,
        #[serde(default = "default_lr")]
        lr: f64,
        #[serde(default = "default_epochs")]
        epochs: usize,
        #[serde(default = "default_l2")]
        l2: f64,
        #[serde(default)]
        class_weight: ClassWeight,
    },
    /// A model file, relative to the scenario file.
    File {
        path: PathBuf,
    },
}

fn default_train_n() -> usize {
    10_000
}
fn default_fraud_rate() -> f64 {
    0.1
}
fn default_lr() -> f64 {
    0.1
}
fn default_epochs() -> usize {
    500
}
fn default_l2() -> f64 {
    1e-4
}

#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AccountSpec {
    pub name: String,
    pub password: String,
    pub pin: String,
    pub balance: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CardSpec {
    pub name: String,
    pub account: String,
    #[serde(default)]
    pub at: u64,
    #[serde(default)]
    pub usage: Option<Usage>,
    #[serde(default)]
    pub limit: Option<u64>,
    #[serde(default)]
    pub valid_for: Option<u64>,
    #[serde(default)]
    pub networks: Option<Vec<u8>>,
}

impl CardSpec {
    pub fn policy(&self) -> PolicyRequest {
        PolicyRequest { usage: self.usage, limit: self.limit, valid_for: self.valid_for, networks: self.networks.clone() }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrafficSpec {
    pub card: String,
    pub at: u64,
    pub amount: u64,
    pub counterparty: Counterparty,
    #[serde(default = "default_label")]
    pub label: Label,
    #[serde(default)]
    pub approval: Option<ApprovalDecision>,
    /// Flip one byte of the token before presenting it.
    #[serde(default)]
    pub tamper: bool,
}

fn default_label() -> Label {
    Label::Legit
}

#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ApprovalRule {
    #[serde(default)]
    pub min_amount: Option<u64>,
    #[serde(default)]
    pub counterparty: Option<String>,
    pub decision: ApprovalDecision,
}

/// The scripted cardholder.
#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ApprovalPolicy {
    #[serde(default = "default_decision")]
    pub default: ApprovalDecision,
    #[serde(default)]
    pub rules: Vec<ApprovalRule>,
}

fn default_decision() -> ApprovalDecision {
    ApprovalDecision::Approve
}

impl Default for ApprovalPolicy {
    fn default() -> Self {
        Self { default: ApprovalDecision::Approve, rules: Vec::new() }
    }
}

impl ApprovalPolicy {
    /// First matching rule wins.
    pub fn decide(&self, t: &TrafficSpec) -> ApprovalDecision {
        if let Some(d) = t.approval {
            return d;
        }
        self.rules
            .iter()
            .find(|r| {
                r.min_amount.is_none_or(|m| t.amount >= m)
                    && r.counterparty.as_deref().is_none_or(|c| c == t.counterparty.id())
            })
            .map_or(self.default, |r| r.decision)
    }
}

/// Generated legit traffic with embedded fraud bursts on one card.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenerateSpec {
    pub card: String,
    pub legit: usize,
    pub fraud: usize,
    #[serde(default = "default_base_amount")]
    pub base_amount: u64,
    #[serde(default = "default_amount_std")]
    pub amount_std: u64,
    #[serde(default = "default_warmup")]
    pub warmup: usize,
    #[serde(default = "default_categories")]
    pub categories: Vec<String>,
}

fn default_base_amount() -> u64 {
    2_500
}
fn default_amount_std() -> u64 {
    500
}
fn default_warmup() -> usize {
    10
}
fn default_categories() -> Vec<String> {
    ["grocery", "fuel", "pharmacy", "restaurant"].map(String::from).to_vec()
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

impl Scenario {
    pub fn parse(text: &str, path: &Path) -> Result<Self, ScenarioError> {
        let scenario: Scenario = toml::from_str(text).map_err(|e| ScenarioError::Parse {
            path: path.to_owned(),
            line: e.span().map_or(0, |s| line_of(text, s.start)),
            message: e.message().to_owned(),
        })?;
        scenario.validate().map_err(|reason| ScenarioError::Invalid { path: path.to_owned(), reason })?;
        Ok(scenario)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ScenarioError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io { path: path.to_owned(), source })?;
        Self::parse(&text, path)
    }

    pub fn display_name(&self) -> &str {
        self.name.as_deref().unwrap_or("scenario")
    }

    fn validate(&self) -> Result<(), String> {
        let mut accounts = BTreeSet::new();
        for a in &self.accounts {
            if !accounts.insert(a.name.as_str()) {
                return Err(format!("account {:?} defined twice", a.name));
            }
        }
        let mut cards = BTreeSet::new();
        for c in &self.cards {
            if !accounts.contains(c.account.as_str()) {
                return Err(format!("card {:?} refers to unknown account {:?}", c.name, c.account));
            }
            if !cards.insert(c.name.as_str()) {
                return Err(format!("card {:?} defined twice", c.name));
            }
        }
        for (i, t) in self.traffic.iter().enumerate() {
            if !cards.contains(t.card.as_str()) {
                return Err(format!("traffic[{i}] refers to unknown card {:?}", t.card));
            }
        }
        if let Some(g) = &self.generate {
            if !cards.contains(g.card.as_str()) {
                return Err(format!("generate refers to unknown card {:?}", g.card));
            }
            if g.categories.is_empty() {
                return Err("generate.categories is empty".into());
            }
        }
        if let ModelSpec::Constant { score } = self.model {
            if !(0.0..=1.0).contains(&score) {
                return Err("model.score must be in [0, 1]".into());
            }
        }
        Ok(())
    }
}
