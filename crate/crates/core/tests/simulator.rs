use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::Arc;
use std::time::Duration;

use cardless::fraud::Confusion;
use cardless::gateway::event_log::EventLog;
use cardless::gateway::serve::{build_state, ServeOptions, DEMO_PASSWORD, DEMO_USER};
use cardless::gateway::auth::Credentials;
use cardless::protocol::{BankConfig, Outcome};
use cardless::sim::{report, run_scenario, run_with_log, ReportFormat, ScenarioError};
use cardless::sim::run::RunError;

fn scenario(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios").join(format!("{name}.toml"))
}

#[test]
fn generated_scenario_confusion_matrix_is_pinned() {
    let m = run_scenario(scenario("generated"), None).unwrap();
    assert_eq!(m.sessions, 120);
    assert_eq!(
        m.confusion,
        Confusion { true_positive: 20, false_positive: 3, true_negative: 97, false_negative: 0 }
    );
    assert!(m.confusion.recall() >= 0.9);
    assert_eq!(m.outcome_count(Outcome::Completed), 97);
    assert_eq!(m.outcome_count(Outcome::Fraudulent), 23);
    assert_eq!(m.residual, 0);
}

#[test]
fn forced_fraud_counts_exactly_one() {
    let m = run_scenario(scenario("fraud"), None).unwrap();
    let nonzero: Vec<_> = m.outcomes.iter().filter(|(_, v)| **v > 0).collect();
    assert_eq!(nonzero, [(&"Fraudulent transaction!".to_string(), &1)]);
}

#[test]
fn outcome_counts_sum_to_sessions_and_money_is_conserved() {
    for name in ["happy", "user_declines", "fraud", "fraud_unavailable", "card_generate_failed", "generated"] {
        let m = run_scenario(scenario(name), None).unwrap();
        assert_eq!(m.outcomes.values().sum::<usize>(), m.sessions, "{name}");
        assert_eq!(m.residual, 0, "{name}");
    }
}

#[test]
fn seed_controls_the_log() {
    let a = run_scenario(scenario("happy"), Some(5)).unwrap();
    let b = run_scenario(scenario("happy"), Some(5)).unwrap();
    let c = run_scenario(scenario("happy"), Some(6)).unwrap();
    assert_eq!(a, b);
    assert_ne!(a.log_digest, c.log_digest);
    assert_eq!(a.outcomes, c.outcomes);
}

#[test]
fn schema_errors_name_file_and_line() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("broken.toml");
    std::fs::write(&path, "seed = 1\n[model]\nkind = \"constant\"\nscore = 0.1\n\n[[accounts]]\nname = \"a\"\nbalance = \"lots\"\n")
        .unwrap();
    match run_scenario(&path, None) {
        Err(RunError::Scenario(ScenarioError::Parse { path: p, line, .. })) => {
            assert_eq!(p, path);
            assert!((6..=8).contains(&line), "line {line}");
        }
        other => panic!("{other:?}"),
    }
    let msg = run_scenario(&path, None).unwrap_err().to_string();
    assert!(msg.contains("broken.toml:"), "{msg}");
}

#[test]
fn tampered_traffic_is_declined_without_touching_money() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("tamper.toml");
    let text = std::fs::read_to_string(scenario("happy")).unwrap().replace(
        "counterparty = { kind = \"merchant\", id = \"m-grocer\", category = \"grocery\" }",
        "counterparty = { kind = \"merchant\", id = \"m-grocer\", category = \"grocery\" }\ntamper = true",
    );
    std::fs::write(&path, text).unwrap();
    let m = run_scenario(&path, None).unwrap();
    assert_eq!(m.declined(), 1);
    assert_eq!(m.residual, 0);
}

#[test]
fn csv_report_of_all_scenarios_parses() {
    let ms: Vec<_> = ["happy", "fraud"].iter().map(|n| run_scenario(scenario(n), None).unwrap()).collect();
    let csv = report(&ms, ReportFormat::Csv);
    let mut r = csv::Reader::from_reader(csv.as_bytes());
    let rows: Vec<_> = r.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), 2);
    assert_eq!(&rows[0][0], "happy");
    assert_eq!(&rows[1][9], "1", "fraudulent column");
}

#[test]
fn file_log_replays_to_the_live_state() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("events.jsonl");
    let run = run_with_log(scenario("generated"), None, Arc::new(EventLog::create(&path).unwrap())).unwrap();
    let replayed = cardless::gateway::event_log::replay_file(&path, &run.bank.keys().storage).unwrap();
    assert_eq!(replayed.digest(), run.metrics.state_digest);
}

fn simulate() -> Command {
    Command::new(env!("CARGO_BIN_EXE_simulate"))
}

#[test]
fn cli_gen_data_train_run() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data.csv");
    let model = dir.path().join("model.txt");
    let out = dir.path().join("out");
    let ok = |c: &mut Command| {
        let o = c.output().unwrap();
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        String::from_utf8(o.stdout).unwrap()
    };
    ok(simulate().args(["gen-data", "--seed", "7", "--n", "1000", "--fraud-rate", "0.1", "--separation", "2"]).arg("--out").arg(&data));
    assert_eq!(std::fs::read_to_string(&data).unwrap().lines().count(), 1_001);
    ok(simulate().args(["train", "--lr", "0.1", "--epochs", "200", "--class-weight", "balanced"]).arg("--data").arg(&data).arg("--out").arg(&model));
    assert!(std::fs::read_to_string(&model).unwrap().starts_with("cardless-fraud-model v1"));
    let stdout = ok(simulate()
        .arg("run")
        .arg(scenario("generated"))
        .args(["--seed", "21", "--report", "csv"])
        .arg("--model")
        .arg(&model)
        .arg("--out")
        .arg(&out));
    assert!(stdout.starts_with("scenario,seed,sessions,tp,fp,tn,fn,"));
    assert_eq!(std::fs::read_to_string(out.join("report.csv")).unwrap(), stdout);
    assert!(out.join("events.jsonl").exists());

    let bad = simulate().arg("run").arg(dir.path().join("missing.toml")).output().unwrap();
    assert!(!bad.status.success());
    assert!(String::from_utf8_lossy(&bad.stderr).contains("missing.toml"));
}

#[test]
fn serve_state_survives_a_restart() {
    let dir = tempfile::tempdir().unwrap();
    let opts = ServeOptions {
        listen: "127.0.0.1:0".parse().unwrap(),
        log: dir.path().join("events.jsonl"),
        model: None,
        seed: Some(17),
        approval_timeout: Duration::from_secs(5),
        demo: true,
        config: BankConfig { he_bits: 256, password_iterations: 1_000, ..BankConfig::default() },
    };
    let first = build_state(&opts).unwrap();
    let digest = first.bank.state_digest();
    let account = first.bank.authenticate(&Credentials::new(DEMO_USER, DEMO_PASSWORD)).unwrap();
    assert_eq!(first.bank.cards_for(&account).unwrap().len(), 1);
    drop(first);

    let second = build_state(&opts).unwrap();
    assert_eq!(second.bank.state_digest(), digest);
    assert_eq!(second.bank.cards_for(&account).unwrap().len(), 1);

    let without_seed = ServeOptions { seed: None, ..opts };
    assert!(build_state(&without_seed).is_err());
}
