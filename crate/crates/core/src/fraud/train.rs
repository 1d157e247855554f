//! Full-batch gradient descent on the L2-regularized, optionally
//! class-weighted negative log-likelihood.

use super::{FraudError, FraudModel, LabeledDataset, DEFAULT_THRESHOLD};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClassWeight {
    /// Every row counts once.
    #[default]
    Uniform,
    /// Each class contributes half of the total weight.
    Balanced,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub lr: f64,
    pub epochs: usize,
    pub l2: f64,
    pub class_weight: ClassWeight,
    pub threshold: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { lr: 0.1, epochs: 500, l2: 1e-4, class_weight: ClassWeight::Uniform, threshold: DEFAULT_THRESHOLD }
    }
}

#[derive(Debug, Clone)]
pub struct TrainingRun {
    pub model: FraudModel,
    /// Objective value before each epoch's update, then once after the last.
    pub losses: Vec<f64>,
}

/// The training objective on standardized rows. Parameters are laid out as
/// `[β₀, β₁, …, βₙ]`; the intercept is not regularized.
#[derive(Debug, Clone)]
pub struct Objective {
    rows: Vec<Vec<f64>>,
    labels: Vec<f64>,
    weights: Vec<f64>,
    l2: f64,
}

fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

impl Objective {
    pub fn new(rows: Vec<Vec<f64>>, labels: Vec<f64>, class_weight: ClassWeight, l2: f64) -> Self {
        let n = labels.len() as f64;
        let positives = labels.iter().filter(|&&y| y > 0.5).count() as f64;
        let weights = labels
            .iter()
            .map(|&y| match class_weight {
                ClassWeight::Uniform => 1.0 / n,
                ClassWeight::Balanced if y > 0.5 => 0.5 / positives,
                ClassWeight::Balanced => 0.5 / (n - positives),
            })
            .collect();
        Self { rows, labels, weights, l2 }
    }

    pub fn dimension(&self) -> usize {
        self.rows.first().map_or(0, Vec::len)
    }

    fn logit(&self, params: &[f64], row: &[f64]) -> f64 {
        params[0] + row.iter().zip(&params[1..]).map(|(x, b)| x * b).sum::<f64>()
    }

    pub fn loss(&self, params: &[f64]) -> f64 {
        let nll: f64 = self
            .rows
            .iter()
            .zip(&self.labels)
            .zip(&self.weights)
            .map(|((row, &y), &w)| {
                let z = self.logit(params, row);
                // -log σ(z) = softplus(-z), -log(1 - σ(z)) = softplus(z)
                w * (y * softplus(-z) + (1.0 - y) * softplus(z))
            })
            .sum();
        let penalty: f64 = params[1..].iter().map(|b| b * b).sum();
        nll + 0.5 * self.l2 * penalty
    }

    pub fn gradient(&self, params: &[f64]) -> Vec<f64> {
        let mut grad = vec![0.0; params.len()];
        for ((row, &y), &w) in self.rows.iter().zip(&self.labels).zip(&self.weights) {
            let p = 1.0 / (1.0 + (-self.logit(params, row)).exp());
            let err = w * (p - y);
            grad[0] += err;
            for (g, x) in grad[1..].iter_mut().zip(row) {
                *g += err * x;
            }
        }
        for (g, b) in grad[1..].iter_mut().zip(&params[1..]) {
            *g += self.l2 * b;
        }
        grad
    }
}

fn standardization(data: &LabeledDataset) -> (Vec<f64>, Vec<f64>) {
    let dim = data.dimension().unwrap_or(0);
    let n = data.len() as f64;
    let mut means = vec![0.0; dim];
    for (x, _) in &data.rows {
        for (m, v) in means.iter_mut().zip(x.values()) {
            *m += v;
        }
    }
    means.iter_mut().for_each(|m| *m /= n);
    let mut stds = vec![0.0; dim];
    for (x, _) in &data.rows {
        for ((s, v), m) in stds.iter_mut().zip(x.values()).zip(&means) {
            *s += (v - m).powi(2);
        }
    }
    // A constant column standardizes to zero; a unit scale keeps it that way.
    let stds = stds.into_iter().map(|s| (s / n).sqrt()).map(|s| if s > 0.0 { s } else { 1.0 }).collect();
    (means, stds)
}

pub fn fit(data: &LabeledDataset, cfg: &TrainConfig) -> Result<TrainingRun, FraudError> {
    let Some(dim) = data.dimension() else {
        return Err(FraudError::Empty);
    };
    if !(cfg.lr > 0.0 && cfg.lr.is_finite()) {
        return Err(FraudError::InvalidParameter("learning rate must be positive"));
    }
    if !(cfg.l2 >= 0.0 && cfg.l2.is_finite()) {
        return Err(FraudError::InvalidParameter("l2 must be non-negative"));
    }
    if let Some((x, _)) = data.rows.iter().find(|(x, _)| x.len() != dim) {
        return Err(FraudError::Dimension { expected: dim, got: x.len() });
    }
    if !data.has_both_classes() {
        return Err(FraudError::SingleClass);
    }

    let (means, stds) = standardization(data);
    let rows = data
        .rows
        .iter()
        .map(|(x, _)| x.values().iter().zip(&means).zip(&stds).map(|((v, m), s)| (v - m) / s).collect())
        .collect();
    let labels = data.rows.iter().map(|(_, l)| l.as_f64()).collect();
    let objective = Objective::new(rows, labels, cfg.class_weight, cfg.l2);

    let mut params = vec![0.0; dim + 1];
    let mut losses = Vec::with_capacity(cfg.epochs + 1);
    for epoch in 0..cfg.epochs {
        let loss = objective.loss(&params);
        if !loss.is_finite() {
            return Err(FraudError::Diverged { epoch });
        }
        losses.push(loss);
        let grad = objective.gradient(&params);
        for (p, g) in params.iter_mut().zip(&grad) {
            *p -= cfg.lr * g;
        }
    }
    let last = objective.loss(&params);
    if !last.is_finite() || params.iter().any(|p| !p.is_finite()) {
        return Err(FraudError::Diverged { epoch: cfg.epochs });
    }
    losses.push(last);

    let model = FraudModel::new(params[0], params[1..].to_vec(), means, stds, cfg.threshold)?;
    Ok(TrainingRun { model, losses })
}

/// Trains with uniform row weights and the default 0.5 threshold.
pub fn train(data: &LabeledDataset, lr: f64, epochs: usize, l2: f64) -> Result<FraudModel, FraudError> {
    let cfg = TrainConfig { lr, epochs, l2, ..TrainConfig::default() };
    fit(data, &cfg).map(|run| run.model)
}

impl FraudModel {
    /// Scores every row of a dataset.
    pub fn scores(&self, data: &LabeledDataset) -> Result<Vec<f64>, FraudError> {
        data.rows.iter().map(|(x, _)| self.predict_proba(x)).collect()
    }
}
