//! Logistic-regression fraud scoring.
//!
//! A [`FraudModel`] stores its intercept and coefficients together with the
//! standardization parameters frozen at training time, so scoring always sees
//! features on the scale the model was fitted on.

mod dataset;
mod features;
mod metrics;
mod model_file;
mod train;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use dataset::{DatasetError, Label, LabeledDataset};
pub use features::{extract_features, CandidateTxn, Channel, TxnRecord, FEATURE_NAMES};
pub use metrics::{auc, evaluate, Confusion, EvalMetrics};
pub use model_file::ModelFileError;
pub use train::{fit, train, ClassWeight, Objective, TrainConfig, TrainingRun};

pub const FEATURE_DIM: usize = 6;
pub const DEFAULT_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FraudError {
    #[error("feature dimension {got} does not match model dimension {expected}")]
    Dimension { expected: usize, got: usize },
    #[error("feature {index} is not finite")]
    NonFinite { index: usize },
    #[error("flag feature {index} must be 0 or 1")]
    Flag { index: usize },
    #[error("invalid model: {0}")]
    InvalidModel(&'static str),
    #[error("candidate transaction precedes the latest history entry")]
    Ordering,
    #[error("training data must contain both classes")]
    SingleClass,
    #[error("training data is empty")]
    Empty,
    #[error("invalid training parameter: {0}")]
    InvalidParameter(&'static str),
    #[error("training diverged at epoch {epoch}")]
    Diverged { epoch: usize },
    #[error("fraud model unavailable")]
    Unavailable,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector(Vec<f64>);

impl FeatureVector {
    pub fn new(values: Vec<f64>) -> Result<Self, FraudError> {
        if let Some(index) = values.iter().position(|v| !v.is_finite()) {
            return Err(FraudError::NonFinite { index });
        }
        Ok(Self(values))
    }

    /// A transaction feature vector: six finite values with the novelty and
    /// channel-mismatch flags restricted to 0 or 1.
    pub fn transaction(values: [f64; FEATURE_DIM]) -> Result<Self, FraudError> {
        for index in [3, 5] {
            if values[index] != 0.0 && values[index] != 1.0 {
                return Err(FraudError::Flag { index });
            }
        }
        Self::new(values.to_vec())
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Legit,
    Fraud,
}

/// Fraud iff `p >= threshold`; a tie goes to fraud.
pub fn verdict_for(p: f64, threshold: f64) -> Verdict {
    if p >= threshold {
        Verdict::Fraud
    } else {
        Verdict::Legit
    }
}

/// Logistic function evaluated without overflow, clamped to the open unit
/// interval so extreme logits still yield a probability strictly inside (0, 1).
pub fn sigmoid(z: f64) -> f64 {
    let p = if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    };
    p.clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON / 2.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FraudModel {
    beta0: f64,
    betas: Vec<f64>,
    feature_means: Vec<f64>,
    feature_stds: Vec<f64>,
    threshold: f64,
}

impl FraudModel {
    pub fn new(
        beta0: f64,
        betas: Vec<f64>,
        feature_means: Vec<f64>,
        feature_stds: Vec<f64>,
        threshold: f64,
    ) -> Result<Self, FraudError> {
        if betas.len() != feature_means.len() || betas.len() != feature_stds.len() {
            return Err(FraudError::InvalidModel("coefficient and standardization lengths differ"));
        }
        if !feature_stds.iter().all(|s| s.is_finite() && *s > 0.0) {
            return Err(FraudError::InvalidModel("standard deviations must be positive"));
        }
        if !(threshold > 0.0 && threshold < 1.0) {
            return Err(FraudError::InvalidModel("threshold must lie in (0, 1)"));
        }
        let finite = std::iter::once(&beta0).chain(&betas).chain(&feature_means).all(|v| v.is_finite());
        if !finite {
            return Err(FraudError::InvalidModel("non-finite parameter"));
        }
        Ok(Self { beta0, betas, feature_means, feature_stds, threshold })
    }

    /// A model over unstandardized features (zero means, unit deviations).
    pub fn raw(beta0: f64, betas: Vec<f64>, threshold: f64) -> Result<Self, FraudError> {
        let n = betas.len();
        Self::new(beta0, betas, vec![0.0; n], vec![1.0; n], threshold)
    }

    pub fn dimension(&self) -> usize {
        self.betas.len()
    }

    pub fn intercept(&self) -> f64 {
        self.beta0
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.betas
    }

    pub fn feature_means(&self) -> &[f64] {
        &self.feature_means
    }

    pub fn feature_stds(&self) -> &[f64] {
        &self.feature_stds
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    pub fn with_threshold(mut self, threshold: f64) -> Result<Self, FraudError> {
        if !(threshold > 0.0 && threshold < 1.0) {
            return Err(FraudError::InvalidModel("threshold must lie in (0, 1)"));
        }
        self.threshold = threshold;
        Ok(self)
    }

    pub fn logit(&self, x: &FeatureVector) -> Result<f64, FraudError> {
        if x.len() != self.dimension() {
            return Err(FraudError::Dimension { expected: self.dimension(), got: x.len() });
        }
        let sum = x
            .values()
            .iter()
            .zip(&self.betas)
            .zip(self.feature_means.iter().zip(&self.feature_stds))
            .map(|((xi, b), (m, s))| b * (xi - m) / s)
            .sum::<f64>();
        Ok(self.beta0 + sum)
    }

    pub fn predict_proba(&self, x: &FeatureVector) -> Result<f64, FraudError> {
        self.logit(x).map(sigmoid)
    }

    pub fn classify(&self, x: &FeatureVector) -> Result<Verdict, FraudError> {
        Ok(verdict_for(self.predict_proba(x)?, self.threshold))
    }
}

/// Anything that can put a fraud probability on a feature vector.
pub trait FraudScorer: Send + Sync {
    fn score(&self, x: &FeatureVector) -> Result<f64, FraudError>;

    fn threshold(&self) -> f64 {
        DEFAULT_THRESHOLD
    }
}

impl FraudScorer for FraudModel {
    fn score(&self, x: &FeatureVector) -> Result<f64, FraudError> {
        self.predict_proba(x)
    }

    fn threshold(&self) -> f64 {
        self.threshold
    }
}

/// Returns the same probability for every transaction. Used to force
/// adjudication branches in tests and scripted scenarios.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstantScorer(pub f64);

impl FraudScorer for ConstantScorer {
    fn score(&self, _x: &FeatureVector) -> Result<f64, FraudError> {
        Ok(self.0)
    }
}

/// A scorer whose backend is down.
#[derive(Debug, Clone, Copy, Default)]
pub struct UnavailableScorer;

impl FraudScorer for UnavailableScorer {
    fn score(&self, _x: &FeatureVector) -> Result<f64, FraudError> {
        Err(FraudError::Unavailable)
    }
}
