use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::run::RunMetrics;
use crate::protocol::Outcome;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    #[default]
    Text,
    Csv,
}

pub const CSV_COLUMNS: [&str; 15] = [
    "scenario",
    "seed",
    "sessions",
    "tp",
    "fp",
    "tn",
    "fn",
    "completed",
    "user_approval_failed",
    "fraudulent",
    "fraud_detection_failed",
    "generate_failed",
    "declined",
    "residual",
    "log_digest",
];

fn row(m: &RunMetrics) -> Vec<String> {
    let c = &m.confusion;
    let mut r = vec![
        m.scenario.clone(),
        m.seed.to_string(),
        m.sessions.to_string(),
        c.true_positive.to_string(),
        c.false_positive.to_string(),
        c.true_negative.to_string(),
        c.false_negative.to_string(),
    ];
    r.extend(Outcome::TERMINAL.iter().map(|&o| m.outcome_count(o).to_string()));
    r.push(m.declined().to_string());
    r.push(m.residual.to_string());
    r.push(m.log_digest.clone());
    r
}

pub fn report(metrics: &[RunMetrics], format: ReportFormat) -> String {
    match format {
        ReportFormat::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(CSV_COLUMNS).expect("in-memory write");
            for m in metrics {
                w.write_record(row(m)).expect("in-memory write");
            }
            String::from_utf8(w.into_inner().expect("flush")).expect("utf-8")
        }
        ReportFormat::Text => {
            let mut s = String::new();
            for m in metrics {
                let c = &m.confusion;
                let _ = writeln!(s, "scenario {} (seed {})", m.scenario, m.seed);
                let _ = writeln!(s, "  sessions        {}", m.sessions);
                for o in Outcome::TERMINAL {
                    let _ = writeln!(s, "  {:<32} {}", o.message(), m.outcome_count(o));
                }
                let _ = writeln!(s, "  {:<32} {}", "Declined", m.declined());
                let _ = writeln!(
                    s,
                    "  confusion       tp {} fp {} tn {} fn {}",
                    c.true_positive, c.false_positive, c.true_negative, c.false_negative
                );
                let _ = writeln!(s, "  precision       {:.4}", c.precision());
                let _ = writeln!(s, "  recall          {:.4}", c.recall());
                let _ = writeln!(s, "  residual        {}", m.residual);
                let _ = writeln!(s, "  log digest      {}", m.log_digest);
                let _ = writeln!(s, "  state digest    {}", m.state_digest);
            }
            s
        }
    }
}
