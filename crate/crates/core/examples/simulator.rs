//! Run every bundled scenario and print the CSV report.

use std::path::Path;

use cardless::sim::{report, run_scenario, ReportFormat};

fn main() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios");
    let mut paths: Vec<_> = std::fs::read_dir(&dir).unwrap().map(|e| e.unwrap().path()).collect();
    paths.sort();
    let metrics: Vec<_> = paths.iter().map(|p| run_scenario(p, None).unwrap()).collect();
    print!("{}", report(&metrics, ReportFormat::Csv));
}
