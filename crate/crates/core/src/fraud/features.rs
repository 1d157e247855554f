use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{FeatureVector, FraudError};

pub const FEATURE_NAMES: [&str; 6] = [
    "amount_z",
    "log_amount",
    "txns_last_hour",
    "category_novel",
    "gap_since_previous",
    "channel_mismatch",
];

const HOUR: u64 = 3_600;
const GAP_CAP_MINUTES: f64 = 1_440.0;
const Z_CLAMP: f64 = 50.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Channel {
    Merchant,
    Atm,
    Transfer,
}

/// One past transaction attempt on an account.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TxnRecord {
    pub timestamp: u64,
    pub amount: u64,
    pub category: String,
    pub channel: Channel,
    pub approved: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CandidateTxn {
    pub timestamp: u64,
    pub amount: u64,
    pub category: String,
    pub channel: Channel,
}

/// Builds the six scoring features for `txn` against the account history.
///
/// Amount statistics, category novelty and the modal channel come from
/// approved transactions only; velocity and the gap since the previous attempt
/// count every attempt, declined or not.
pub fn extract_features(history: &[TxnRecord], txn: &CandidateTxn) -> Result<FeatureVector, FraudError> {
    if history.iter().any(|r| r.timestamp > txn.timestamp) {
        return Err(FraudError::Ordering);
    }
    let approved: Vec<&TxnRecord> = history.iter().filter(|r| r.approved).collect();

    let amount_z = if approved.len() < 2 {
        0.0
    } else {
        let n = approved.len() as f64;
        let mean = approved.iter().map(|r| r.amount as f64).sum::<f64>() / n;
        let var = approved.iter().map(|r| (r.amount as f64 - mean).powi(2)).sum::<f64>() / n;
        ((txn.amount as f64 - mean) / var.sqrt().max(1.0)).clamp(-Z_CLAMP, Z_CLAMP)
    };

    let log_amount = (1.0 + txn.amount as f64).log10();

    let last_hour = history.iter().filter(|r| r.timestamp + HOUR > txn.timestamp).count() as f64;

    let novel = !approved.iter().any(|r| r.category == txn.category);

    let gap = history
        .iter()
        .map(|r| r.timestamp)
        .max()
        .map_or(1.0, |last| ((txn.timestamp - last) as f64 / 60.0).min(GAP_CAP_MINUTES) / GAP_CAP_MINUTES);

    let mut counts: BTreeMap<Channel, usize> = BTreeMap::new();
    for r in &approved {
        *counts.entry(r.channel).or_default() += 1;
    }
    let top = counts.values().copied().max();
    let mismatch = match top {
        None => true,
        Some(top) => counts.get(&txn.channel).copied() != Some(top),
    };

    FeatureVector::transaction([
        amount_z,
        log_amount,
        last_hour,
        f64::from(u8::from(novel)),
        gap,
        f64::from(u8::from(mismatch)),
    ])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(timestamp: u64, amount: u64, category: &str, channel: Channel) -> TxnRecord {
        TxnRecord { timestamp, amount, category: category.into(), channel, approved: true }
    }

    fn cand(timestamp: u64, amount: u64, category: &str, channel: Channel) -> CandidateTxn {
        CandidateTxn { timestamp, amount, category: category.into(), channel }
    }

    #[test]
    fn empty_history_base_case() {
        let x = extract_features(&[], &cand(100, 2500, "grocery", Channel::Merchant)).unwrap();
        assert_eq!(x.values()[0], 0.0);
        assert_eq!(x.values()[1], 2501f64.log10());
        assert_eq!(x.values()[2], 0.0);
        assert_eq!(x.values()[3], 1.0);
        assert_eq!(x.values()[4], 1.0);
        assert_eq!(x.values()[5], 1.0);
    }

    #[test]
    fn amount_at_mean_has_zero_z() {
        let h = [rec(0, 1000, "a", Channel::Merchant), rec(10, 3000, "a", Channel::Merchant)];
        let x = extract_features(&h, &cand(20, 2000, "a", Channel::Merchant)).unwrap();
        assert_eq!(x.values()[0], 0.0);
    }

    #[test]
    fn three_row_history_by_hand() {
        let h = [
            rec(0, 1000, "grocery", Channel::Merchant),
            rec(3_000, 2000, "grocery", Channel::Merchant),
            rec(6_000, 3000, "fuel", Channel::Atm),
        ];
        let x = extract_features(&h, &cand(6_600, 4000, "electronics", Channel::Merchant)).unwrap();
        // mean 2000, population variance (1000² + 0 + 1000²)/3
        let std = (2_000_000f64 / 3.0).sqrt();
        let want = [2000.0 / std, 4001f64.log10(), 1.0, 1.0, 10.0 / 1440.0, 0.0];
        for (got, want) in x.values().iter().zip(want) {
            assert!((got - want).abs() < 1e-12, "{got} vs {want}");
        }
        assert!((x.values()[0] - 2.449_489_742_783_178).abs() < 1e-12);
    }

    #[test]
    fn declines_count_for_velocity_not_spend() {
        let mut declined = rec(3_500, 900_000, "casino", Channel::Transfer);
        declined.approved = false;
        let h = [rec(0, 1000, "a", Channel::Merchant), rec(100, 1000, "a", Channel::Merchant), declined];
        let x = extract_features(&h, &cand(3_600, 1000, "casino", Channel::Transfer)).unwrap();
        assert_eq!(x.values()[0], 0.0);
        assert_eq!(x.values()[2], 2.0);
        assert_eq!(x.values()[3], 1.0);
        assert_eq!(x.values()[4], 100.0 / 60.0 / 1440.0);
        assert_eq!(x.values()[5], 1.0);
    }

    #[test]
    fn modal_channel_ties_accept_either() {
        let h = [rec(0, 1, "a", Channel::Merchant), rec(1, 1, "a", Channel::Atm)];
        for ch in [Channel::Merchant, Channel::Atm] {
            assert_eq!(extract_features(&h, &cand(2, 1, "a", ch)).unwrap().values()[5], 0.0);
        }
        assert_eq!(extract_features(&h, &cand(2, 1, "a", Channel::Transfer)).unwrap().values()[5], 1.0);
    }

    #[test]
    fn gap_is_capped() {
        let h = [rec(0, 1, "a", Channel::Merchant)];
        let x = extract_features(&h, &cand(10 * 86_400, 1, "a", Channel::Merchant)).unwrap();
        assert_eq!(x.values()[4], 1.0);
    }

    #[test]
    fn non_monotone_timestamp() {
        let h = [rec(500, 1, "a", Channel::Merchant)];
        assert_eq!(
            extract_features(&h, &cand(499, 1, "a", Channel::Merchant)).unwrap_err(),
            FraudError::Ordering
        );
    }
}
