use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, LogNormal, Normal};

use crate::fraud::{FeatureVector, FraudError, Label, LabeledDataset};

const BASE_AMOUNT: f64 = 2_500.0;

/// Synthetic labelled transactions in the six-feature layout.
///
/// Legit rows: amount z-score ~ N(0, 1), a log-normal amount around 25.00,
/// hourly velocity ~ max(0, N(1, 1)), novelty ~ Bernoulli(0.2), gap ~ U(0, 1),
/// channel mismatch ~ Bernoulli(0.1). Fraud rows are identical except that the
/// z-score and velocity means move up by `separation`.
pub fn gen_dataset(seed: u64, n: usize, fraud_rate: f64, separation: f64) -> Result<LabeledDataset, FraudError> {
    if !(0.0..=1.0).contains(&fraud_rate) {
        return Err(FraudError::InvalidParameter("fraud_rate must be in [0, 1]"));
    }
    if !(separation >= 0.0 && separation.is_finite()) {
        return Err(FraudError::InvalidParameter("separation must be finite and non-negative"));
    }
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let unit = Normal::new(0.0, 1.0).expect("valid");
    let amount = LogNormal::new(BASE_AMOUNT.ln(), 0.5).expect("valid");

    let mut rows = Vec::with_capacity(n);
    for _ in 0..n {
        let label = if rng.gen_bool(fraud_rate) { Label::Fraud } else { Label::Legit };
        let shift = if label.is_fraud() { separation } else { 0.0 };
        let z = shift + unit.sample(&mut rng);
        let log_amount = (1.0 + amount.sample(&mut rng)).log10();
        let velocity = (1.0 + shift + unit.sample(&mut rng)).max(0.0);
        let novel = f64::from(u8::from(rng.gen_bool(0.2)));
        let gap = rng.gen::<f64>();
        let mismatch = f64::from(u8::from(rng.gen_bool(0.1)));
        rows.push((FeatureVector::transaction([z, log_amount, velocity, novel, gap, mismatch])?, label));
    }
    Ok(LabeledDataset::new(rows))
}
