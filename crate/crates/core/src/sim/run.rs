use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;
use std::time::Duration;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::generator::gen_dataset;
use super::scenario::{GenerateSpec, ModelSpec, Scenario, ScenarioError, TrafficSpec};
use crate::clock::ManualClock;
use crate::entropy::EntropyMode;
use crate::fraud::{fit, Confusion, ConstantScorer, FraudError, FraudModel, FraudScorer, Label, ModelFileError, TrainConfig};
use crate::gateway::auth::Credentials;
use crate::gateway::event_log::EventLog;
use crate::protocol::{
    ApprovalDecision, Bank, BankConfig, Counterparty, FixedDecision, IssuedCard, Outcome, ProtocolError,
};

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error("model: {0}")]
    Model(#[from] FraudError),
    #[error("model file: {0}")]
    ModelFile(#[from] ModelFileError),
}

/// Summary of one scenario run.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub scenario: String,
    pub seed: u64,
    /// Payment sessions plus card requests that ended in failure.
    pub sessions: usize,
    /// Fraud label against the "Fraudulent transaction!" outcome.
    pub confusion: Confusion,
    pub outcomes: BTreeMap<String, usize>,
    /// Traffic skipped because its card was never issued.
    pub skipped: usize,
    /// |debited − credited| + |credited − approved|; zero when money is conserved.
    pub residual: u64,
    pub log_digest: String,
    pub state_digest: String,
}

impl RunMetrics {
    pub fn outcome_count(&self, outcome: Outcome) -> usize {
        self.outcomes.get(&outcome.message()).copied().unwrap_or(0)
    }

    /// All declines, whatever the reason.
    pub fn declined(&self) -> usize {
        self.outcomes.iter().filter(|(k, _)| k.starts_with("Declined")).map(|(_, v)| v).sum()
    }
}

/// A finished run with the bank still attached, for inspection.
pub struct ScenarioRun {
    pub metrics: RunMetrics,
    pub bank: Bank,
    pub issued: BTreeMap<String, IssuedCard>,
    /// Session id and label for every presented transaction, in order.
    pub labelled_sessions: Vec<(String, Label)>,
}

pub fn build_scorer(spec: &ModelSpec, base_dir: &Path, seed: u64) -> Result<Option<Box<dyn FraudScorer>>, RunError> {
    Ok(match spec {
        ModelSpec::Constant { score } => Some(Box::new(ConstantScorer(*score))),
        ModelSpec::Unavailable => None,
        ModelSpec::Trained { separation, n, fraud_rate, seed: s, lr, epochs, l2, class_weight } => {
            let data = gen_dataset(s.unwrap_or(seed), *n, *fraud_rate, *separation)?;
            let cfg = TrainConfig { lr: *lr, epochs: *epochs, l2: *l2, class_weight: *class_weight, ..Default::default() };
            Some(Box::new(fit(&data, &cfg)?.model))
        }
        ModelSpec::File { path } => Some(Box::new(FraudModel::load(base_dir.join(path))?)),
    })
}

fn legit_amount(rng: &mut ChaCha20Rng, g: &GenerateSpec) -> u64 {
    let normal = Normal::new(g.base_amount as f64, g.amount_std as f64).expect("valid");
    normal.sample(rng).round().max(100.0) as u64
}

/// Legit purchases at habitual merchants every 30 to 120 minutes, with fraud
/// bursts of two to four large purchases minutes apart at unfamiliar
/// merchants. Bursts are separated from legit traffic by over an hour.
pub fn generate_traffic(g: &GenerateSpec, seed: u64, start_at: u64) -> Vec<TrafficSpec> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed ^ 0x7261_6666_6963);
    enum Unit {
        Legit,
        Burst(usize),
    }
    let warmup = g.warmup.min(g.legit);
    let mut units: Vec<Unit> = (warmup..g.legit).map(|_| Unit::Legit).collect();
    let mut remaining = g.fraud;
    while remaining > 0 {
        let k = rng.gen_range(2..=4).min(remaining);
        let pos = rng.gen_range(0..=units.len());
        units.insert(pos, Unit::Burst(k));
        remaining -= k;
    }

    let mut out = Vec::with_capacity(g.legit + g.fraud);
    let mut t = start_at;
    let mut burst_no = 0;
    let legit = |rng: &mut ChaCha20Rng, t: u64| {
        let category = g.categories[rng.gen_range(0..g.categories.len())].clone();
        TrafficSpec {
            card: g.card.clone(),
            at: t,
            amount: legit_amount(rng, g),
            counterparty: Counterparty::Merchant { id: format!("m-{category}"), category },
            label: Label::Legit,
            approval: Some(ApprovalDecision::Approve),
            tamper: false,
        }
    };
    for _ in 0..warmup {
        t += rng.gen_range(30..=120) * 60;
        out.push(legit(&mut rng, t));
    }
    let mut after_burst = false;
    for unit in units {
        match unit {
            Unit::Legit => {
                t += if after_burst { rng.gen_range(61..=180) } else { rng.gen_range(30..=120) } * 60;
                after_burst = false;
                out.push(legit(&mut rng, t));
            }
            Unit::Burst(k) => {
                burst_no += 1;
                t += rng.gen_range(61..=120) * 60;
                for i in 0..k {
                    if i > 0 {
                        t += rng.gen_range(1..=5) * 60;
                    }
                    let sigmas = rng.gen_range(4.0..7.0);
                    out.push(TrafficSpec {
                        card: g.card.clone(),
                        at: t,
                        amount: g.base_amount + (sigmas * g.amount_std as f64).round() as u64,
                        counterparty: Counterparty::Merchant {
                            id: format!("m-unfamiliar-{burst_no}-{i}"),
                            category: format!("electronics-{burst_no}-{i}"),
                        },
                        label: Label::Fraud,
                        // The real cardholder did not start these.
                        approval: Some(ApprovalDecision::Decline),
                        tamper: false,
                    });
                }
                after_burst = true;
            }
        }
    }
    out
}

enum Action<'a> {
    Issue(usize),
    Pay(&'a TrafficSpec),
}

pub fn run_scenario(path: impl AsRef<Path>, seed: Option<u64>) -> Result<RunMetrics, RunError> {
    Ok(run_with_log(path, seed, Arc::new(EventLog::in_memory()))?.metrics)
}

pub fn run_with_log(path: impl AsRef<Path>, seed: Option<u64>, log: Arc<EventLog>) -> Result<ScenarioRun, RunError> {
    let path = path.as_ref();
    let scenario = Scenario::load(path)?;
    let base = path.parent().unwrap_or(Path::new("."));
    run_loaded(&scenario, base, seed, log)
}

pub fn run_loaded(scenario: &Scenario, base_dir: &Path, seed: Option<u64>, log: Arc<EventLog>) -> Result<ScenarioRun, RunError> {
    let seed = seed.unwrap_or(scenario.seed);
    let clock = Arc::new(ManualClock::new(scenario.start_time));
    let cfg = BankConfig {
        iin: scenario.iin.clone(),
        network_id: scenario.network_id,
        he_bits: scenario.he_bits,
        password_iterations: scenario.password_iterations,
        approval_timeout: Duration::from_secs(120),
        ..BankConfig::default()
    };
    let bank = Bank::new(cfg, EntropyMode::Seeded(seed), clock.clone(), log.clone())?;
    let scorer = build_scorer(&scenario.model, base_dir, seed)?;

    let mut outcomes: BTreeMap<String, usize> = Outcome::TERMINAL.iter().map(|o| (o.message(), 0)).collect();
    for a in &scenario.accounts {
        bank.open_account(&a.name, &a.password, &a.pin, a.balance)?;
    }

    let generated = scenario.generate.as_ref().map_or_else(Vec::new, |g| {
        let after = scenario.traffic.iter().map(|t| t.at).max().unwrap_or(0).max(
            scenario.cards.iter().map(|c| c.at).max().unwrap_or(0),
        );
        generate_traffic(g, seed, after)
    });
    let mut actions: Vec<(u64, u8, usize, Action)> = Vec::new();
    for (i, c) in scenario.cards.iter().enumerate() {
        actions.push((c.at, 0, i, Action::Issue(i)));
    }
    for (i, t) in scenario.traffic.iter().chain(&generated).enumerate() {
        actions.push((t.at, 1, i, Action::Pay(t)));
    }
    actions.sort_by_key(|(at, kind, i, _)| (*at, *kind, *i));

    let mut issued: BTreeMap<String, IssuedCard> = BTreeMap::new();
    let mut confusion = Confusion::default();
    let mut sessions = 0;
    let mut skipped = 0;
    let mut labelled_sessions = Vec::new();
    for (at, _, _, action) in actions {
        clock.set(scenario.start_time + at);
        match action {
            Action::Issue(i) => {
                let spec = &scenario.cards[i];
                let account = &scenario.accounts.iter().find(|a| a.name == spec.account).expect("validated");
                match bank.request_card(&Credentials::new(&account.name, &account.password), &spec.policy()) {
                    Ok(card) => {
                        issued.insert(spec.name.clone(), card);
                    }
                    Err(ProtocolError::CardGenerateFailed { .. }) => {
                        sessions += 1;
                        *outcomes.entry(Outcome::CardGenerateFailed.message()).or_default() += 1;
                    }
                    Err(e) => return Err(e.into()),
                }
            }
            Action::Pay(t) => {
                let Some(card) = issued.get(&t.card) else {
                    skipped += 1;
                    continue;
                };
                let mut token = card.token.clone();
                if t.tamper {
                    let i = token.len() / 2;
                    token[i] ^= 0x01;
                }
                let decision = scenario.approval_policy.decide(t);
                let s = bank.process(&token, &t.counterparty, t.amount, scorer.as_deref(), &FixedDecision(decision))?;
                let outcome = s.outcome.expect("scripted sessions always finish");
                sessions += 1;
                *outcomes.entry(outcome.message()).or_default() += 1;
                confusion.record(t.label.is_fraud(), outcome == Outcome::Fraudulent);
                labelled_sessions.push((s.session_id, t.label));
            }
        }
    }

    let state = bank.snapshot();
    let approved: u64 =
        state.sessions.values().filter(|s| s.outcome == Some(Outcome::Completed)).map(|s| s.amount).sum();
    let debited = state.total_debited();
    let credited = state.total_credited();
    let residual = debited.abs_diff(credited) + credited.abs_diff(approved);

    let metrics = RunMetrics {
        scenario: scenario.display_name().to_owned(),
        seed,
        sessions,
        confusion,
        outcomes,
        skipped,
        residual,
        log_digest: log.canonical_digest(),
        state_digest: state.digest(),
    };
    Ok(ScenarioRun { metrics, bank, issued, labelled_sessions })
}
