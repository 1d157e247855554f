use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::{FeatureVector, FEATURE_NAMES};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Legit,
    Fraud,
}

impl Label {
    pub fn as_f64(self) -> f64 {
        match self {
            Label::Legit => 0.0,
            Label::Fraud => 1.0,
        }
    }

    pub fn is_fraud(self) -> bool {
        self == Label::Fraud
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct LabeledDataset {
    pub rows: Vec<(FeatureVector, Label)>,
}

impl LabeledDataset {
    pub fn new(rows: Vec<(FeatureVector, Label)>) -> Self {
        Self { rows }
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn dimension(&self) -> Option<usize> {
        self.rows.first().map(|(x, _)| x.len())
    }

    pub fn fraud_count(&self) -> usize {
        self.rows.iter().filter(|(_, l)| l.is_fraud()).count()
    }

    pub fn has_both_classes(&self) -> bool {
        let frauds = self.fraud_count();
        frauds > 0 && frauds < self.len()
    }

    /// First `fraction` of rows for training, the rest held out.
    pub fn split(&self, fraction: f64) -> (LabeledDataset, LabeledDataset) {
        let cut = ((self.len() as f64) * fraction).round() as usize;
        let (a, b) = self.rows.split_at(cut.min(self.len()));
        (LabeledDataset::new(a.to_vec()), LabeledDataset::new(b.to_vec()))
    }

    /// CSV with one column per feature followed by a `label` column.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), csv::Error> {
        let mut w = csv::Writer::from_writer(out);
        let dim = self.dimension().unwrap_or(FEATURE_NAMES.len());
        let mut header: Vec<String> = (0..dim)
            .map(|i| FEATURE_NAMES.get(i).map_or_else(|| format!("x{}", i + 1), |s| s.to_string()))
            .collect();
        header.push("label".into());
        w.write_record(&header)?;
        for (x, label) in &self.rows {
            let mut rec: Vec<String> = x.values().iter().map(f64::to_string).collect();
            rec.push(match label {
                Label::Legit => "legit".into(),
                Label::Fraud => "fraud".into(),
            });
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(input: R) -> Result<Self, DatasetError> {
        let mut r = csv::Reader::from_reader(input);
        let width = r.headers()?.len();
        if width < 2 {
            return Err(DatasetError::Schema { line: 1, reason: "need feature columns and a label".into() });
        }
        let mut rows = Vec::new();
        for (i, rec) in r.records().enumerate() {
            let line = i + 2;
            let rec = rec?;
            let mut values = Vec::with_capacity(width - 1);
            for field in rec.iter().take(width - 1) {
                let v: f64 = field
                    .trim()
                    .parse()
                    .map_err(|_| DatasetError::Schema { line, reason: format!("not a number: {field:?}") })?;
                values.push(v);
            }
            let label = match rec.get(width - 1).map(str::trim) {
                Some("legit") | Some("0") => Label::Legit,
                Some("fraud") | Some("1") => Label::Fraud,
                other => {
                    return Err(DatasetError::Schema { line, reason: format!("bad label {other:?}") });
                }
            };
            let x = FeatureVector::new(values)
                .map_err(|e| DatasetError::Schema { line, reason: e.to_string() })?;
            rows.push((x, label));
        }
        Ok(Self { rows })
    }
}

#[derive(Debug, thiserror::Error)]
pub enum DatasetError {
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("line {line}: {reason}")]
    Schema { line: usize, reason: String },
}
