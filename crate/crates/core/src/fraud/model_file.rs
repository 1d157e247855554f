//! Plain-text model files.
//!
//! ```text
//! cardless-fraud-model v1
//! dimension 6
//! threshold 0.5
//! intercept -2.1
//! coefficients 1.5 0.2 0.9 0 0.01 0.3
//! means ...
//! stds ...
//! ```
//!
//! Numbers use Rust's shortest round-trip formatting, so a model written and
//! read back is bit-identical.

use std::fmt::Write as _;
use std::path::Path;

use thiserror::Error;

use super::{FraudError, FraudModel};

const HEADER: &str = "cardless-fraud-model v1";

#[derive(Debug, Error)]
pub enum ModelFileError {
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error(transparent)]
    Model(#[from] FraudError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn join(values: &[f64]) -> String {
    values.iter().map(f64::to_string).collect::<Vec<_>>().join(" ")
}

impl FraudModel {
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{HEADER}");
        let _ = writeln!(s, "dimension {}", self.dimension());
        let _ = writeln!(s, "threshold {}", self.threshold());
        let _ = writeln!(s, "intercept {}", self.intercept());
        let _ = writeln!(s, "coefficients {}", join(self.coefficients()));
        let _ = writeln!(s, "means {}", join(self.feature_means()));
        let _ = writeln!(s, "stds {}", join(self.feature_stds()));
        s
    }

    pub fn from_text(text: &str) -> Result<Self, ModelFileError> {
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim())).filter(|(_, l)| !l.is_empty());
        let err = |line: usize, reason: &str| ModelFileError::Parse { line, reason: reason.to_owned() };

        match lines.next() {
            Some((_, HEADER)) => {}
            Some((line, _)) => return Err(err(line, "unknown header")),
            None => return Err(err(1, "empty model file")),
        }

        let mut field = |name: &str| -> Result<(usize, Vec<f64>), ModelFileError> {
            let (line, text) = lines.next().ok_or_else(|| err(0, &format!("missing `{name}`")))?;
            let mut parts = text.split_whitespace();
            if parts.next() != Some(name) {
                return Err(err(line, &format!("expected `{name}`")));
            }
            let values = parts
                .map(|p| p.parse::<f64>().map_err(|_| err(line, &format!("bad number {p:?}"))))
                .collect::<Result<Vec<_>, _>>()?;
            Ok((line, values))
        };

        let (dline, dim) = field("dimension")?;
        let dim = match dim.as_slice() {
            [d] if *d >= 0.0 && d.fract() == 0.0 => *d as usize,
            _ => return Err(err(dline, "dimension must be one non-negative integer")),
        };
        let scalar = |(line, v): (usize, Vec<f64>)| match v.as_slice() {
            [x] => Ok(*x),
            _ => Err(err(line, "expected one value")),
        };
        let threshold = scalar(field("threshold")?)?;
        let intercept = scalar(field("intercept")?)?;
        let mut vector = |name: &str| -> Result<Vec<f64>, ModelFileError> {
            let (line, v) = field(name)?;
            if v.len() != dim {
                return Err(err(line, &format!("`{name}` needs {dim} values, found {}", v.len())));
            }
            Ok(v)
        };
        let coefficients = vector("coefficients")?;
        let means = vector("means")?;
        let stds = vector("stds")?;
        Ok(FraudModel::new(intercept, coefficients, means, stds, threshold)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), ModelFileError> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ModelFileError> {
        Self::from_text(&std::fs::read_to_string(path)?)
    }
}
