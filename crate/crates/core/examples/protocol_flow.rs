//! Issue a one-time card, pay with it, then try to pay with it again.

use std::sync::Arc;

use cardless::clock::ManualClock;
use cardless::entropy::EntropyMode;
use cardless::fraud::ConstantScorer;
use cardless::gateway::auth::Credentials;
use cardless::gateway::event_log::EventLog;
use cardless::protocol::{AlwaysApprove, Bank, BankConfig, Counterparty, PolicyRequest, Usage};

fn main() {
    let clock = Arc::new(ManualClock::new(1_700_000_000));
    let cfg = BankConfig { he_bits: 512, password_iterations: 1_000, ..BankConfig::default() };
    let bank = Bank::new(cfg, EntropyMode::Seeded(1), clock.clone(), Arc::new(EventLog::in_memory())).unwrap();
    bank.open_account("alice", "alice-password", "123456", 50_000).unwrap();

    let creds = Credentials::new("alice", "alice-password");
    let card = bank.request_card(&creds, &PolicyRequest::new(Usage::OneTime, 5_000, 3_600)).unwrap();
    println!("issued {} ({}), qr {}", card.card_id, card.masked_pan, card.qr_payload);

    let shop = Counterparty::Merchant { id: "m-bakery".into(), category: "grocery".into() };
    let scorer = ConstantScorer(0.1);
    for attempt in 1..=2 {
        clock.advance(60);
        let s = bank.process(&card.token, &shop, 1_800, Some(&scorer), &AlwaysApprove).unwrap();
        println!("attempt {attempt}: {}", s.outcome.unwrap().message());
        for e in &s.events {
            println!("  {:>8} {:?} {:?}", format!("{:?}", e.phase), e.actor, e.detail);
        }
    }
    println!("balance {}", bank.balance(&bank.account_id_for("alice").unwrap()).unwrap());
}
