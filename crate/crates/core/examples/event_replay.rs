//! Write a scenario's events to a file and rebuild the ledger from it.

use std::path::Path;
use std::sync::Arc;

use cardless::gateway::event_log::{replay_file, EventLog};
use cardless::sim::run_with_log;

fn main() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("events.jsonl");
    let scenario = Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios/happy.toml");
    let run = run_with_log(&scenario, None, Arc::new(EventLog::create(&path).unwrap())).unwrap();

    let text = std::fs::read_to_string(&path).unwrap();
    println!("{} events", text.lines().count());
    for line in text.lines().take(4) {
        println!("  {}", &line[..line.len().min(110)]);
    }
    let replayed = replay_file(&path, &run.bank.keys().storage).unwrap();
    println!("live     {}", run.bank.state_digest());
    println!("replayed {}", replayed.digest());
}
