//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails.

use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::{Duration, Instant};

use cardless::card_numbering::{luhn_check_digit, luhn_validate, PanRegistry};
use cardless::clock::ManualClock;
use cardless::crypto::paillier::HeKeyPair;
use cardless::entropy::EntropyMode;
use cardless::fraud::{evaluate, fit, ClassWeight, ConstantScorer, Objective, TrainConfig};
use cardless::gateway::event_log::{replay, EventLog};
use cardless::protocol::ledger::LedgerEvent;
use cardless::protocol::{
    AlwaysApprove, ApprovalDecision, Bank, BankConfig, Counterparty, FixedDecision, Outcome, Phase, PolicyRequest,
    Usage,
};
use cardless::sim::{gen_dataset, run_with_log, Scenario};
use num_bigint::BigUint;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use regex::Regex;

// Pinned tolerances and budgets.
const LUHN_BUDGET: Duration = Duration::from_secs(5);
const PAN_COUNT: usize = 100_000;
const PAN_BUDGET: Duration = Duration::from_secs(30);
const HE_BITS: usize = 512;
const HE_BUDGET: Duration = Duration::from_secs(60);
const GRAD_H: f64 = 1e-5;
const GRAD_DRAWS: usize = 20;
const GRAD_MAX_REL: f64 = 1e-5;
const FRAUD_SEED: u64 = 42;
const FRAUD_MIN_AUC: f64 = 0.95;
const FRAUD_MIN_RECALL: f64 = 0.90;
const CHANCE_AUC: (f64, f64) = (0.45, 0.55);
const TRAIN_BUDGET: Duration = Duration::from_secs(60);
const FUZZ_SESSIONS: usize = 10_000;

const FIVE: [(&str, Outcome); 5] = [
    ("happy", Outcome::Completed),
    ("user_declines", Outcome::UserApprovalFailed),
    ("fraud", Outcome::Fraudulent),
    ("fraud_unavailable", Outcome::FraudDetectionFailed),
    ("card_generate_failed", Outcome::CardGenerateFailed),
];

type Verdict = Result<String, String>;

fn check(cond: bool, ok: impl Into<String>, bad: impl Into<String>) -> Verdict {
    if cond {
        Ok(ok.into())
    } else {
        Err(bad.into())
    }
}

fn scenarios_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios")
}

fn bundled() -> Vec<PathBuf> {
    let mut v: Vec<PathBuf> = std::fs::read_dir(scenarios_dir())
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "toml"))
        .collect();
    v.sort();
    v
}

/// Independent Luhn: double every second digit counting from the right of
/// the finished number, where the check digit occupies position 1.
fn oracle_check_digit(body: &[u8]) -> u8 {
    let mut sum = 0u32;
    for (i, d) in body.iter().rev().enumerate() {
        let d = u32::from(*d);
        sum += if i % 2 == 0 {
            let twice = 2 * d;
            twice / 10 + twice % 10
        } else {
            d
        };
    }
    ((10 - sum % 10) % 10) as u8
}

fn digits_to_string(d: &[u8]) -> String {
    d.iter().map(|x| char::from(b'0' + x)).collect()
}

fn luhn_oracle() -> Verdict {
    let start = Instant::now();
    let mut mismatches = 0;
    for n in 0..10_000u32 {
        let body: Vec<u8> = format!("{n:04}").bytes().map(|b| b - b'0').collect();
        let expected = oracle_check_digit(&body);
        // The library takes 7 to 18 digits; leading zeros add nothing to the
        // sum, so the padded body must give the 4-digit body's check digit.
        let s = format!("000{}", digits_to_string(&body));
        if luhn_check_digit(&s).unwrap() != expected || !luhn_validate(&format!("{s}{expected}")).unwrap() {
            mismatches += 1;
        }
    }
    let mut rng = ChaCha20Rng::seed_from_u64(1);
    for _ in 0..100_000 {
        let len = rng.gen_range(7..=18);
        let body: Vec<u8> = (0..len).map(|_| rng.gen_range(0..10)).collect();
        let s = digits_to_string(&body);
        let expected = oracle_check_digit(&body);
        let wrong = (expected + rng.gen_range(1..10)) % 10;
        if luhn_check_digit(&s).unwrap() != expected
            || !luhn_validate(&format!("{s}{expected}")).unwrap()
            || luhn_validate(&format!("{s}{wrong}")).unwrap()
        {
            mismatches += 1;
        }
    }
    let t = start.elapsed();
    check(
        mismatches == 0 && t < LUHN_BUDGET,
        format!("110000 bodies agree with the oracle in {t:.2?}"),
        format!("{mismatches} mismatches in {t:.2?}"),
    )
}

fn pan_scale() -> Verdict {
    let start = Instant::now();
    let mut registry = PanRegistry::new();
    let mut rng = ChaCha20Rng::seed_from_u64(2);
    let pans: Vec<String> = (0..PAN_COUNT).map(|_| registry.issue("444433", &mut rng, 32).unwrap().pan()).collect();
    let t = start.elapsed();
    let mut sorted = pans.clone();
    sorted.sort_unstable();
    sorted.dedup();
    let dups = PAN_COUNT - sorted.len();
    let invalid = pans.iter().filter(|p| !luhn_validate(p).unwrap()).count();
    let wrong_len = pans.iter().filter(|p| p.len() != 16 || !p.bytes().all(|b| b.is_ascii_digit())).count();
    check(
        dups == 0 && invalid == 0 && wrong_len == 0 && registry.active_len() == PAN_COUNT && t < PAN_BUDGET,
        format!("{PAN_COUNT} PANs, 0 duplicates, all Luhn-valid 16-digit, {t:.2?}"),
        format!("dups {dups}, invalid {invalid}, bad length {wrong_len}, {t:.2?}"),
    )
}

fn homomorphism() -> Verdict {
    let start = Instant::now();
    let mut rng = ChaCha20Rng::seed_from_u64(3);
    let keys = HeKeyPair::generate(HE_BITS, &mut rng).unwrap();
    let (pk, sk) = (&keys.public_key, &keys.secret_key);
    let mut failures = 0;
    for _ in 0..1_000 {
        let a = BigUint::from(rng.gen::<u128>());
        let b = BigUint::from(rng.gen::<u128>());
        let sum = pk.add(&pk.encrypt(&a, &mut rng).unwrap(), &pk.encrypt(&b, &mut rng).unwrap()).unwrap();
        failures += usize::from(sk.decrypt(&sum).unwrap() != &a + &b);
    }
    for _ in 0..1_000 {
        let m = BigUint::from(rng.gen::<u128>());
        let k = BigUint::from(rng.gen::<u64>());
        let scaled = pk.scale(&pk.encrypt(&m, &mut rng).unwrap(), &k).unwrap();
        failures += usize::from(sk.decrypt(&scaled).unwrap() != &m * &k);
    }
    let t = start.elapsed();
    check(
        failures == 0 && t < HE_BUDGET,
        format!("1000 sums and 1000 scalings exact under a {HE_BITS}-bit key, {t:.2?}"),
        format!("{failures} wrong results, {t:.2?}"),
    )
}

fn gradient() -> Verdict {
    let mut rng = ChaCha20Rng::seed_from_u64(4);
    let mut worst: f64 = 0.0;
    for draw in 0..GRAD_DRAWS {
        let n = rng.gen_range(5..40);
        let dim = rng.gen_range(1..7);
        let rows: Vec<Vec<f64>> = (0..n).map(|_| (0..dim).map(|_| rng.gen_range(-2.0..2.0)).collect()).collect();
        let mut labels: Vec<f64> = (0..n).map(|_| f64::from(u8::from(rng.gen_bool(0.3)))).collect();
        labels[0] = 0.0;
        labels[1] = 1.0;
        let weight = if draw % 2 == 0 { ClassWeight::Uniform } else { ClassWeight::Balanced };
        let obj = Objective::new(rows, labels, weight, rng.gen_range(0.0..0.1));
        let params: Vec<f64> = (0..=dim).map(|_| rng.gen_range(-1.5..1.5)).collect();
        let analytic = obj.gradient(&params);
        for j in 0..params.len() {
            let mut up = params.clone();
            let mut down = params.clone();
            up[j] += GRAD_H;
            down[j] -= GRAD_H;
            let numeric = (obj.loss(&up) - obj.loss(&down)) / (2.0 * GRAD_H);
            let scale = analytic[j].abs().max(numeric.abs()).max(1e-8);
            worst = worst.max((analytic[j] - numeric).abs() / scale);
        }
    }
    check(
        worst < GRAD_MAX_REL,
        format!("max relative error {worst:.2e} over {GRAD_DRAWS} draws (h = {GRAD_H:e})"),
        format!("max relative error {worst:.2e} exceeds {GRAD_MAX_REL:e}"),
    )
}

fn fraud_detection() -> Verdict {
    let cfg = TrainConfig { class_weight: ClassWeight::Balanced, ..TrainConfig::default() };
    let measure = |separation: f64| {
        let data = gen_dataset(FRAUD_SEED, 10_000, 0.1, separation).unwrap();
        let (train, holdout) = data.split(0.8);
        let start = Instant::now();
        let model = fit(&train, &cfg).unwrap().model;
        let t = start.elapsed();
        (evaluate(&model, &holdout).unwrap(), t)
    };
    let (sep2, t2) = measure(2.0);
    let (sep0, t0) = measure(0.0);
    let auc2 = sep2.auc.unwrap_or(0.0);
    let auc0 = sep0.auc.unwrap_or(0.0);
    let ok = auc2 >= FRAUD_MIN_AUC
        && sep2.recall >= FRAUD_MIN_RECALL
        && (CHANCE_AUC.0..=CHANCE_AUC.1).contains(&auc0)
        && t2 < TRAIN_BUDGET
        && t0 < TRAIN_BUDGET;
    let msg = format!(
        "separation 2: auc {auc2:.4} recall {:.4} (trained in {t2:.2?}); separation 0: auc {auc0:.4}",
        sep2.recall
    );
    check(ok, msg.clone(), msg)
}

fn terminal_coverage() -> Verdict {
    let mut reached = Vec::new();
    for (name, expected) in FIVE {
        let path = scenarios_dir().join(format!("{name}.toml"));
        let run = run_with_log(&path, None, Arc::new(EventLog::in_memory())).map_err(|e| format!("{name}: {e}"))?;
        let m = &run.metrics;
        let nonzero: Vec<_> = m.outcomes.iter().filter(|(_, v)| **v > 0).collect();
        if m.sessions != 1 || nonzero.len() != 1 || m.outcome_count(expected) != 1 {
            return Err(format!("{name}: outcomes {nonzero:?}"));
        }
        let state = run.bank.snapshot();
        let steps = |v: &[u8]| -> Vec<Phase> {
            v.iter().map(|&p| Phase::Step(p)).chain(std::iter::once(Phase::Terminal)).collect()
        };
        for issuance in state.issuances.values() {
            let phases: Vec<Phase> = issuance.events.iter().map(|e| e.phase).collect();
            let want = match issuance.outcome {
                Some(Outcome::CardGenerateFailed) => steps(&[1]),
                _ => vec![1, 2, 3, 4, 5].into_iter().map(Phase::Step).collect(),
            };
            if phases != want {
                return Err(format!("{name}: issuance phases {phases:?}"));
            }
        }
        for s in state.sessions.values() {
            let want = match s.outcome {
                Some(Outcome::Completed) => steps(&[6, 7, 8, 9, 10, 11]),
                Some(Outcome::UserApprovalFailed) => steps(&[6, 7, 8]),
                Some(Outcome::Fraudulent | Outcome::FraudDetectionFailed) => steps(&[6, 7]),
                other => return Err(format!("{name}: unexpected outcome {other:?}")),
            };
            if s.phases() != want {
                return Err(format!("{name}: session phases {:?}", s.phases()));
            }
        }
        reached.push(expected.message());
    }
    reached.sort();
    reached.dedup();
    check(reached.len() == 5, format!("five scenarios reach the five strings: {reached:?}"), "coverage incomplete")
}

fn small_bank(seed: u64) -> (Bank, Arc<ManualClock>) {
    let clock = Arc::new(ManualClock::new(1_700_000_000));
    let cfg = BankConfig { he_bits: 256, password_iterations: 1_000, ..BankConfig::default() };
    let bank = Bank::new(cfg, EntropyMode::Seeded(seed), clock.clone(), Arc::new(EventLog::in_memory())).unwrap();
    (bank, clock)
}

fn one_time_and_limits(logs: &mut Vec<String>, views: &mut Vec<String>, pans: &mut Vec<String>) -> Verdict {
    let (bank, clock) = small_bank(5);
    let account = bank.open_account("alice", "alice-correct-horse", "482913", 100_000_000).unwrap();
    let shop = Counterparty::Merchant { id: "m-shop".into(), category: "grocery".into() };
    let scorer = ConstantScorer(0.1);

    let one = bank.request_card_for(&account, &PolicyRequest::new(Usage::OneTime, 10_000, 86_400)).unwrap();
    let first = bank.process(&one.token, &shop, 2_000, Some(&scorer), &AlwaysApprove).unwrap();
    let mut replays_declined = 0;
    for _ in 0..100 {
        clock.advance(1);
        let again = bank.process(&one.token, &shop, 2_000, Some(&scorer), &AlwaysApprove).unwrap();
        replays_declined += usize::from(matches!(again.outcome, Some(Outcome::Declined(_))));
    }
    if first.outcome != Some(Outcome::Completed) || replays_declined != 100 {
        return Err(format!("one-time: first {:?}, {replays_declined}/100 replays declined", first.outcome));
    }

    let mut rng = ChaCha20Rng::seed_from_u64(6);
    let limit = 50_000;
    let mut card = bank.request_card_for(&account, &PolicyRequest::new(Usage::MultiUse, limit, 10_000_000)).unwrap();
    let mut settled_on_card = 0u64;
    let (mut completed, mut refused, mut max_seen) = (0, 0, 0);
    for i in 0..FUZZ_SESSIONS {
        if i % 25 == 24 {
            card = bank.request_card_for(&account, &PolicyRequest::new(Usage::MultiUse, limit, 10_000_000)).unwrap();
            settled_on_card = 0;
        }
        clock.advance(rng.gen_range(1..120));
        let amount = rng.gen_range(1..8_000);
        let decision = if rng.gen_bool(0.9) { ApprovalDecision::Approve } else { ApprovalDecision::Decline };
        let s = bank.process(&card.token, &shop, amount, Some(&scorer), &FixedDecision(decision)).unwrap();
        match s.outcome {
            Some(Outcome::Completed) => {
                completed += 1;
                settled_on_card += amount;
            }
            Some(Outcome::Declined(_)) => refused += 1,
            _ => {}
        }
        views.push(serde_json::to_string(&s.counterparty_view()).unwrap());
        let spent = bank.spent(&card.card_id).unwrap();
        max_seen = max_seen.max(spent);
        if spent > limit || spent != settled_on_card {
            return Err(format!("session {i}: spent {spent}, settled {settled_on_card}, limit {limit}"));
        }
    }
    logs.push(bank.log().text());
    pans.extend(bank.snapshot().cards.values().map(|c| c.pan.pan()));
    check(
        refused > 0 && completed > 0,
        format!(
            "100/100 one-time replays declined; {FUZZ_SESSIONS} sessions: {completed} settled, {refused} refused, \
             max spent {max_seen} <= {limit}"
        ),
        "fuzz never exercised both paths",
    )
}

fn secrecy(logs: &[String], views: &[String], pans: &[String]) -> Verdict {
    let mut secrets: Vec<String> = Vec::new();
    let mut pins: Vec<String> = Vec::new();
    for path in bundled() {
        let s = Scenario::load(&path).unwrap();
        for a in s.accounts {
            secrets.push(a.password);
            pins.push(a.pin);
        }
    }
    secrets.push("alice-correct-horse".into());
    pins.push("482913".into());
    // A PIN only counts as leaked when it stands alone, not inside a longer
    // digit run or hex string.
    let pin_res: Vec<Regex> =
        pins.iter().map(|p| Regex::new(&format!(r"(^|[^0-9A-Za-z]){p}($|[^0-9A-Za-z])")).unwrap()).collect();
    let mut hits = Vec::new();
    let mut scanned = 0usize;
    for text in logs.iter().chain(views) {
        scanned += text.len();
        for s in &secrets {
            if text.contains(s.as_str()) {
                hits.push(format!("password {s:?}"));
            }
        }
        for p in pans {
            if text.contains(p.as_str()) {
                hits.push("PAN".into());
            }
        }
        for (re, p) in pin_res.iter().zip(&pins) {
            if re.is_match(text) {
                hits.push(format!("PIN {p}"));
            }
        }
    }
    check(
        hits.is_empty() && !pans.is_empty(),
        format!("{} PANs, {} passwords, {} PINs absent from {scanned} bytes", pans.len(), secrets.len(), pins.len()),
        format!("leaks: {hits:?}"),
    )
}

fn determinism_and_replay(logs: &mut Vec<String>, views: &mut Vec<String>, pans: &mut Vec<String>) -> Verdict {
    let mut lines = Vec::new();
    for path in bundled() {
        let name = path.file_stem().unwrap().to_string_lossy().to_string();
        let a = run_with_log(&path, None, Arc::new(EventLog::in_memory())).map_err(|e| format!("{name}: {e}"))?;
        let b = run_with_log(&path, None, Arc::new(EventLog::in_memory())).map_err(|e| format!("{name}: {e}"))?;
        if a.metrics != b.metrics || a.bank.log().text() != b.bank.log().text() {
            return Err(format!("{name}: runs differ"));
        }
        let replayed = replay(&a.bank.log().records(), &a.bank.keys().storage).map_err(|e| format!("{name}: {e}"))?;
        if replayed.digest() != a.bank.state_digest() || a.metrics.state_digest != replayed.digest() {
            return Err(format!("{name}: replay digest differs"));
        }
        if a.metrics.residual != 0 {
            return Err(format!("{name}: residual {}", a.metrics.residual));
        }
        let state = a.bank.snapshot();
        pans.extend(state.cards.values().map(|c| c.pan.pan()));
        views.extend(state.sessions.values().map(|s| serde_json::to_string(&s.counterparty_view()).unwrap()));
        let settled = a.bank.log().records().iter().filter(|r| matches!(r.event, LedgerEvent::Settled { .. })).count();
        lines.push(format!("{name}={}..({settled} settled)", &a.metrics.log_digest[..12]));
        logs.push(a.bank.log().text());
    }
    Ok(format!("{} scenarios: identical digests on rerun, replay matches live state; {}", lines.len(), lines.join(", ")))
}

fn main() {
    // Accept and ignore libtest arguments such as --nocapture.
    let filter: Option<String> = std::env::args().skip(1).find(|a| !a.starts_with('-'));
    let mut logs = Vec::new();
    let mut views = Vec::new();
    let mut pans = Vec::new();

    let mut results: Vec<(&str, Verdict)> = Vec::new();
    let mut run = |name: &'static str, f: &mut dyn FnMut() -> Verdict| {
        if filter.as_deref().is_some_and(|flt| !name.contains(flt)) {
            return;
        }
        let r = std::panic::catch_unwind(std::panic::AssertUnwindSafe(f)).unwrap_or_else(|_| Err("panicked".into()));
        let (tag, detail) = match &r {
            Ok(d) => ("PASS", d),
            Err(d) => ("FAIL", d),
        };
        println!("{tag} {name}: {detail}");
        results.push((name, r));
    };
    run("luhn oracle equivalence", &mut luhn_oracle);
    run("pan generation at scale", &mut pan_scale);
    run("homomorphism", &mut homomorphism);
    run("gradient correctness", &mut gradient);
    run("fraud detection property", &mut fraud_detection);
    run("terminal coverage", &mut terminal_coverage);
    run("determinism and replay", &mut || determinism_and_replay(&mut logs, &mut views, &mut pans));
    run("one-time and limit semantics", &mut || one_time_and_limits(&mut logs, &mut views, &mut pans));
    run("secrecy scan", &mut || secrecy(&logs, &views, &pans));

    let failed = results.iter().filter(|(_, r)| r.is_err()).count();
    println!("{} criteria, {} passed, {failed} failed", results.len(), results.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
