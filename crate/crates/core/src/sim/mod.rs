//! Deterministic scenario runner on a logical clock.

pub mod generator;
pub mod report;
pub mod run;
pub mod scenario;

pub use generator::gen_dataset;
pub use report::{report, ReportFormat};
pub use run::{run_loaded, run_scenario, run_with_log, RunError, RunMetrics, ScenarioRun};
pub use scenario::{Scenario, ScenarioError};
