use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Duration;

use clap::{Parser, Subcommand, ValueEnum};

use cardless::fraud::{fit, ClassWeight, LabeledDataset, TrainConfig};
use cardless::gateway::event_log::EventLog;
use cardless::gateway::serve::{serve, BoxError, ServeOptions};
use cardless::protocol::BankConfig;
use cardless::sim::scenario::ModelSpec;
use cardless::sim::{gen_dataset, report, run_loaded, ReportFormat, Scenario};

#[derive(Parser)]
#[command(name = "simulate", version, about = "Cardless payment simulator and gateway")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Text,
    Csv,
}

#[derive(Clone, Copy, ValueEnum)]
enum Weight {
    Uniform,
    Balanced,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario file and print its metrics.
    Run {
        scenario: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Replace the scenario's model with this model file.
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "text")]
        report: Format,
        /// Write events.jsonl and the report here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write a synthetic labelled dataset as CSV.
    GenData {
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 0.1)]
        fraud_rate: f64,
        #[arg(long, default_value_t = 2.0)]
        separation: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a logistic-regression model on a CSV dataset.
    Train {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = 0.1)]
        lr: f64,
        #[arg(long, default_value_t = 500)]
        epochs: usize,
        #[arg(long, default_value_t = 1e-4)]
        l2: f64,
        #[arg(long, value_enum, default_value = "uniform")]
        class_weight: Weight,
        #[arg(long)]
        out: PathBuf,
    },
    /// Serve the HTTP gateway.
    Serve {
        #[arg(long, default_value = "127.0.0.1:8080")]
        listen: SocketAddr,
        #[arg(long, default_value = "events.jsonl")]
        log: PathBuf,
        #[arg(long)]
        model: Option<PathBuf>,
        /// Deterministic keys and identifiers.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value_t = 120)]
        approval_timeout: u64,
        /// Open a demo account with one card on a fresh log.
        #[arg(long)]
        demo: bool,
    },
}

fn main() -> ExitCode {
    tracing_subscriber::fmt().with_writer(std::io::stderr).init();
    match dispatch(Cli::parse().command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn dispatch(command: Command) -> Result<(), BoxError> {
    match command {
        Command::Run { scenario, seed, model, report: format, out } => run(&scenario, seed, model, format, out),
        Command::GenData { seed, n, fraud_rate, separation, out } => {
            let data = gen_dataset(seed, n, fraud_rate, separation)?;
            data.write_csv(std::fs::File::create(&out)?)?;
            println!("wrote {} rows ({} fraud) to {}", data.len(), data.fraud_count(), out.display());
            Ok(())
        }
        Command::Train { data, lr, epochs, l2, class_weight, out } => {
            let data = LabeledDataset::read_csv(std::fs::File::open(&data)?)?;
            let class_weight = match class_weight {
                Weight::Uniform => ClassWeight::Uniform,
                Weight::Balanced => ClassWeight::Balanced,
            };
            let run = fit(&data, &TrainConfig { lr, epochs, l2, class_weight, ..TrainConfig::default() })?;
            run.model.save(&out)?;
            let first = run.losses.first().copied().unwrap_or(f64::NAN);
            let last = run.losses.last().copied().unwrap_or(f64::NAN);
            println!("loss {first:.6} -> {last:.6}; model written to {}", out.display());
            Ok(())
        }
        Command::Serve { listen, log, model, seed, approval_timeout, demo } => {
            let opts = ServeOptions {
                listen,
                log,
                model,
                seed,
                approval_timeout: Duration::from_secs(approval_timeout),
                demo,
                config: BankConfig::default(),
            };
            tokio::runtime::Runtime::new()?.block_on(serve(opts))
        }
    }
}

fn run(path: &Path, seed: Option<u64>, model: Option<PathBuf>, format: Format, out: Option<PathBuf>) -> Result<(), BoxError> {
    let mut scenario = Scenario::load(path)?;
    if let Some(model) = model {
        scenario.model = ModelSpec::File { path: std::path::absolute(model)? };
    }
    let log = match &out {
        Some(dir) => {
            std::fs::create_dir_all(dir)?;
            let events = dir.join("events.jsonl");
            if events.exists() {
                std::fs::remove_file(&events)?;
            }
            Arc::new(EventLog::create(events)?)
        }
        None => Arc::new(EventLog::in_memory()),
    };
    let base = path.parent().unwrap_or(Path::new("."));
    let result = run_loaded(&scenario, base, seed, log)?;
    let (format, ext) = match format {
        Format::Text => (ReportFormat::Text, "txt"),
        Format::Csv => (ReportFormat::Csv, "csv"),
    };
    let rendered = report(std::slice::from_ref(&result.metrics), format);
    if let Some(dir) = &out {
        std::fs::write(dir.join(format!("report.{ext}")), &rendered)?;
    }
    print!("{rendered}");
    Ok(())
}
