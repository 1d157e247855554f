use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;
use std::time::Duration;

use crate::clock::SystemClock;
use crate::entropy::EntropyMode;
use crate::fraud::{FraudModel, FraudScorer};
use crate::gateway::event_log::EventLog;
use crate::gateway::http::{router, AppState};
use crate::protocol::{Bank, BankConfig, PolicyRequest, Usage};

pub type BoxError = Box<dyn std::error::Error + Send + Sync>;

pub const DEMO_USER: &str = "demo";
pub const DEMO_PASSWORD: &str = "demo-password";
pub const DEMO_PIN: &str = "123456";

#[derive(Debug, Clone)]
pub struct ServeOptions {
    pub listen: SocketAddr,
    pub log: PathBuf,
    pub model: Option<PathBuf>,
    pub seed: Option<u64>,
    pub approval_timeout: Duration,
    /// Opens a demo account with one card when the log is new.
    pub demo: bool,
    pub config: BankConfig,
}

/// Builds the bank from the options. An existing non-empty log is replayed,
/// which needs the seed that created it.
pub fn build_state(opts: &ServeOptions) -> Result<AppState, BoxError> {
    let clock = Arc::new(SystemClock);
    let entropy = EntropyMode::from_seed(opts.seed);
    let cfg = BankConfig { approval_timeout: opts.approval_timeout, ..opts.config.clone() };
    let existing = std::fs::metadata(&opts.log).map(|m| m.len() > 0).unwrap_or(false);
    let bank = if existing {
        if opts.seed.is_none() {
            return Err(format!("{} already has events; pass the --seed that created it", opts.log.display()).into());
        }
        Bank::restore(cfg, entropy, clock.clone(), &opts.log)?
    } else {
        if opts.log.exists() {
            std::fs::remove_file(&opts.log)?;
        }
        let bank = Bank::new(cfg, entropy, clock.clone(), Arc::new(EventLog::create(&opts.log)?))?;
        if opts.demo {
            let account = bank.open_account(DEMO_USER, DEMO_PASSWORD, DEMO_PIN, 1_000_000)?;
            bank.request_card_for(&account, &PolicyRequest::new(Usage::OneTime, 10_000, 86_400))?;
        }
        bank
    };
    let scorer: Option<Arc<dyn FraudScorer>> = match &opts.model {
        Some(path) => Some(Arc::new(FraudModel::load(path)?)),
        None => None,
    };
    let rng = match opts.seed {
        Some(s) => EntropyMode::Seeded(s ^ 0x005e_ed0f_706b_656e).rng(),
        None => EntropyMode::Os.rng(),
    };
    Ok(AppState::new(Arc::new(bank), scorer, clock, rng))
}

pub async fn serve(opts: ServeOptions) -> Result<(), BoxError> {
    let state = build_state(&opts)?;
    if state.scorer.is_none() {
        tracing::warn!("no fraud model loaded; every payment will end in \"Fraud detection failed!\"");
    }
    let listener = tokio::net::TcpListener::bind(opts.listen).await?;
    tracing::info!(addr = %listener.local_addr()?, log = %opts.log.display(), "gateway listening");
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}
